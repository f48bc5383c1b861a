//! Meaning-representation strings: `slot[value], slot[value], ...`.

use crate::error::{Error, Result};

/// One `slot[value]` pair. Values are lowercased; slot names keep their case.
pub type SlotValue = (String, String);

/// Parses an E2E meaning representation. Whitespace around slots, brackets
/// and values is ignored; an empty string yields no pairs.
pub fn parse_mr(mr: &str) -> Result<Vec<SlotValue>> {
    let mut pairs = Vec::new();
    let bytes = mr.as_bytes();
    let mut pos = 0;
    let skip_ws = |mut p: usize| {
        while p < bytes.len() && bytes[p].is_ascii_whitespace() {
            p += 1;
        }
        p
    };
    pos = skip_ws(pos);
    if pos == bytes.len() {
        return Ok(pairs);
    }
    loop {
        let slot_start = pos;
        let open = mr[pos..].find('[').map(|i| pos + i).ok_or_else(|| Error::Parse {
            offset: slot_start,
            message: "expected '[' after slot name".into(),
        })?;
        let slot = mr[slot_start..open].trim();
        if slot.is_empty() || slot.contains([',', ']']) {
            return Err(Error::Parse {
                offset: slot_start,
                message: format!("invalid slot name {slot:?}"),
            });
        }
        let close = mr[open + 1..]
            .find(']')
            .map(|i| open + 1 + i)
            .ok_or_else(|| Error::Parse {
                offset: open,
                message: "unclosed '['".into(),
            })?;
        let value = &mr[open + 1..close];
        if value.contains('[') {
            return Err(Error::Parse {
                offset: open + 1 + value.find('[').unwrap_or(0),
                message: "nested '['".into(),
            });
        }
        pairs.push((slot.to_string(), value.trim().to_lowercase()));
        pos = skip_ws(close + 1);
        if pos == bytes.len() {
            break;
        }
        if bytes[pos] != b',' {
            return Err(Error::Parse {
                offset: pos,
                message: "expected ',' between pairs".into(),
            });
        }
        pos = skip_ws(pos + 1);
        if pos == bytes.len() {
            return Err(Error::Parse {
                offset: pos,
                message: "trailing ','".into(),
            });
        }
    }
    Ok(pairs)
}

pub fn format_mr(pairs: &[SlotValue]) -> String {
    pairs
        .iter()
        .map(|(s, v)| format!("{s}[{v}]"))
        .collect::<Vec<_>>()
        .join(", ")
}

/// Order- and case-insensitive key used to group co-references.
pub fn canonical_key(pairs: &[SlotValue]) -> String {
    let mut sorted: Vec<SlotValue> = pairs
        .iter()
        .map(|(s, v)| (s.to_lowercase(), v.to_lowercase()))
        .collect();
    sorted.sort();
    sorted.dedup();
    format_mr(&sorted)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_the_bibimbap_frame() {
        let pairs = parse_mr(
            "name[Bibimbap House], food[English], priceRange[moderate], area [riverside], near [Clare Hall]",
        )
        .unwrap();
        assert_eq!(pairs.len(), 5);
        assert_eq!(pairs[0], ("name".into(), "bibimbap house".into()));
        assert_eq!(pairs[3], ("area".into(), "riverside".into()));
        assert_eq!(pairs[4], ("near".into(), "clare hall".into()));
    }

    #[test]
    fn empty_and_simple_inputs() {
        assert!(parse_mr("").unwrap().is_empty());
        assert!(parse_mr("   ").unwrap().is_empty());
        assert_eq!(
            parse_mr("eatType[pub], area[riverside]").unwrap(),
            vec![
                ("eatType".to_string(), "pub".to_string()),
                ("area".to_string(), "riverside".to_string())
            ]
        );
    }

    #[test]
    fn malformed_input_reports_offsets() {
        match parse_mr("name[Blue Spice") {
            Err(Error::Parse { offset, .. }) => assert_eq!(offset, 4),
            other => panic!("unexpected {other:?}"),
        }
        match parse_mr("name[a] area[b]") {
            Err(Error::Parse { offset, .. }) => assert_eq!(offset, 8),
            other => panic!("unexpected {other:?}"),
        }
        assert!(parse_mr("name").is_err());
        assert!(parse_mr("[x]").is_err());
        assert!(parse_mr("name[a],").is_err());
    }

    #[test]
    fn canonical_key_ignores_order_and_spacing() {
        let a = parse_mr("name[The Eagle], area[riverside]").unwrap();
        let b = parse_mr("area [Riverside] ,name[the eagle]").unwrap();
        assert_eq!(canonical_key(&a), canonical_key(&b));
    }

    proptest! {
        #[test]
        fn parse_inverts_format_on_canonical_frames(
            pairs in prop::collection::vec(("[a-zA-Z][a-zA-Z ]{0,8}[a-zA-Z]", "[a-z0-9£][a-z0-9 £-]{0,10}[a-z0-9]"), 0..6)
        ) {
            let canonical: Vec<SlotValue> = pairs;
            let s = format_mr(&canonical);
            prop_assert_eq!(parse_mr(&s).unwrap(), canonical);
        }
    }
}

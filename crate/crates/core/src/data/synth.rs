//! Seeded generator of restaurant-domain pairs in the E2E CSV schema.
//!
//! The slot inventory and value sets mirror the E2E training data (8 slots,
//! 79 slot-value pairs). Sentences come from paraphrase templates with
//! shuffled clause order; a configurable fraction of non-name slots is left
//! unmentioned in the text, as crowd-sourced references often do.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::dataset::RawRow;
use super::mr::{canonical_key, format_mr, SlotValue};

pub const NAMES: &[&str] = &[
    "Alimentum", "Aromi", "Bibimbap House", "Blue Spice", "Browns Cambridge", "Clowns", "Cocum",
    "Cotto", "Fitzbillies", "Giraffe", "Green Man", "Loch Fyne", "Midsummer House", "Strada",
    "Taste of Cambridge", "The Cambridge Blue", "The Cricketers", "The Dumpling Tree",
    "The Eagle", "The Golden Curry", "The Golden Palace", "The Mill", "The Olive Grove",
    "The Phoenix", "The Plough", "The Punter", "The Rice Boat", "The Twenty Two", "The Vaults",
    "The Waterman", "The Wrestlers", "Travellers Rest Beefeater", "Wildwood", "Zizzi",
];
pub const EAT_TYPES: &[&str] = &["coffee shop", "pub", "restaurant"];
pub const FOODS: &[&str] = &["Chinese", "English", "Fast food", "French", "Indian", "Italian", "Japanese"];
pub const PRICES: &[&str] = &["cheap", "high", "less than £20", "moderate", "more than £30", "£20-25"];
pub const RATINGS: &[&str] = &["1 out of 5", "3 out of 5", "5 out of 5", "average", "high", "low"];
pub const AREAS: &[&str] = &["city centre", "riverside"];
pub const FAMILY: &[&str] = &["no", "yes"];
pub const NEAR: &[&str] = &[
    "All Bar One", "Avalon", "Burger King", "Café Adriatic", "Café Brazil", "Café Rouge",
    "Café Sicilia", "Clare Hall", "Crowne Plaza Hotel", "Express by Holiday Inn",
    "Rainbow Vegetarian Café", "Raja Indian Cuisine", "Ranch", "The Bakers", "The Portland Arms",
    "The Rice Boat", "The Six Bells", "The Sorrento", "Yippee Noodle Bar",
];

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    pub train_mrs: usize,
    pub test_mrs: usize,
    /// Inclusive range of references per MR.
    pub refs_per_mr: (usize, usize),
    /// Probability that a non-name slot is left out of a reference.
    pub omission_rate: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 2020,
            train_mrs: 400,
            test_mrs: 200,
            refs_per_mr: (2, 4),
            omission_rate: 0.1,
        }
    }
}

#[derive(Clone, Debug)]
struct Mr {
    name: &'static str,
    eat: Option<&'static str>,
    food: Option<&'static str>,
    price: Option<&'static str>,
    rating: Option<&'static str>,
    area: Option<&'static str>,
    family: Option<&'static str>,
    near: Option<&'static str>,
}

impl Mr {
    fn pairs(&self) -> Vec<SlotValue> {
        let mut out = vec![("name".to_string(), self.name.to_string())];
        let mut push = |slot: &str, v: Option<&str>| {
            if let Some(v) = v {
                out.push((slot.to_string(), v.to_string()));
            }
        };
        push("eatType", self.eat);
        push("food", self.food);
        push("priceRange", self.price);
        push("customer rating", self.rating);
        push("area", self.area);
        push("familyFriendly", self.family);
        push("near", self.near);
        out
    }
}

fn pick<R: Rng>(rng: &mut R, xs: &[&'static str]) -> &'static str {
    xs[rng.gen_range(0..xs.len())]
}

fn maybe<R: Rng>(rng: &mut R, p: f64, xs: &[&'static str]) -> Option<&'static str> {
    rng.gen_bool(p).then(|| pick(rng, xs))
}

fn sample_mr<R: Rng>(rng: &mut R) -> Mr {
    let food = maybe(rng, 0.6, FOODS);
    // cheap food tends to come with cheap prices and modest ratings
    let price = if food == Some("Fast food") && rng.gen_bool(0.7) {
        Some(*["cheap", "less than £20"].choose(rng).expect("non-empty"))
    } else {
        maybe(rng, 0.6, PRICES)
    };
    let rating = match price {
        Some("high" | "more than £30") if rng.gen_bool(0.6) => {
            Some(*["high", "5 out of 5", "3 out of 5"].choose(rng).expect("non-empty"))
        }
        Some("cheap" | "less than £20") if rng.gen_bool(0.6) => {
            Some(*["low", "average", "1 out of 5"].choose(rng).expect("non-empty"))
        }
        _ => maybe(rng, 0.55, RATINGS),
    };
    Mr {
        name: pick(rng, NAMES),
        eat: maybe(rng, 0.75, EAT_TYPES),
        food,
        price,
        rating,
        area: maybe(rng, 0.6, AREAS),
        family: maybe(rng, 0.5, FAMILY),
        near: maybe(rng, 0.4, NEAR),
    }
}

fn choose<R: Rng>(rng: &mut R, options: &[String]) -> String {
    options[rng.gen_range(0..options.len())].clone()
}

fn food_text(food: &str) -> String {
    if food == "Fast food" {
        "fast food".to_string()
    } else {
        format!("{food} food")
    }
}

fn clause<R: Rng>(rng: &mut R, slot: &str, value: &str) -> String {
    let s = |v: &[&str]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>();
    let options: Vec<String> = match slot {
        "food" => vec![
            format!("serving {}", food_text(value)),
            format!("that serves {}", food_text(value)),
            format!("offering {} cuisine", value.to_lowercase().replace(" food", "")),
            format!("with {}", food_text(value)),
        ],
        "priceRange" => match value {
            "cheap" => s(&["with cheap prices", "that is cheap", "in the cheap price range", "with low prices"]),
            "moderate" => s(&["with moderate prices", "that is moderately priced", "with an average price range"]),
            "high" => s(&["with high prices", "that is expensive", "in the high price range"]),
            "less than £20" => s(&["with prices less than £20", "costing under £20", "where meals are less than £20"]),
            "more than £30" => s(&["with prices more than £30", "costing over £30", "where meals are more than £30"]),
            _ => s(&["with prices of £20-25", "in the £20-25 price range", "costing £20-25"]),
        },
        "customer rating" => match value {
            "average" => s(&["with an average customer rating", "rated average by customers"]),
            "high" => s(&["with a high customer rating", "that is highly rated by customers"]),
            "low" => s(&["with a low customer rating", "rated low by customers"]),
            v => vec![
                format!("rated {v} by customers"),
                format!("with a customer rating of {v}"),
                format!("which has a {v} rating"),
            ],
        },
        "area" => match value {
            "riverside" => s(&["in the riverside area", "by the riverside", "located on the riverside"]),
            _ => s(&["in the city centre", "located in the city centre", "in the centre of the city"]),
        },
        "familyFriendly" => match value {
            "yes" => s(&["that is family friendly", "that is kid friendly", "where children are welcome"]),
            _ => s(&["that is not family friendly", "that is not kid friendly", "where children are not welcome"]),
        },
        "near" => vec![
            format!("near {value}"),
            format!("close to {value}"),
            format!("located near {value}"),
        ],
        _ => vec![value.to_string()],
    };
    choose(rng, &options)
}

fn realise<R: Rng>(rng: &mut R, mr: &Mr, omission_rate: f64) -> String {
    let mut rest: Vec<(&str, &str)> = Vec::new();
    let mut keep = |slot: &'static str, v: Option<&'static str>, rng: &mut R| {
        if let Some(v) = v {
            if !rng.gen_bool(omission_rate) {
                rest.push((slot, v));
            }
        }
    };
    let eat = mr.eat.filter(|_| !rng.gen_bool(omission_rate));
    keep("food", mr.food, rng);
    keep("priceRange", mr.price, rng);
    keep("customer rating", mr.rating, rng);
    keep("area", mr.area, rng);
    keep("familyFriendly", mr.family, rng);
    keep("near", mr.near, rng);
    rest.shuffle(rng);

    let name = mr.name;
    let opening = match eat {
        Some(e) => {
            let article = if e.starts_with(['a', 'e', 'i', 'o', 'u']) { "an" } else { "a" };
            choose(
                rng,
                &[
                    format!("{name} is {article} {e}"),
                    format!("There is {article} {e} called {name}"),
                    format!("{name} is a nice {e}"),
                    format!("For {article} {e}, try {name}"),
                ],
            )
        }
        None => choose(
            rng,
            &[
                format!("{name} is a place"),
                format!("There is a venue called {name}"),
                format!("{name} is an eatery"),
            ],
        ),
    };
    let clauses: Vec<String> = rest.iter().map(|(s, v)| clause(rng, s, v)).collect();
    let body = match clauses.len() {
        0 => String::new(),
        1 => format!(" {}", clauses[0]),
        n => {
            let head = clauses[..n - 1].join(", ");
            if rng.gen_bool(0.5) {
                format!(" {head} and {}", clauses[n - 1])
            } else {
                format!(" {head}. It is also {}", clauses[n - 1])
            }
        }
    };
    format!("{opening}{body}.")
}

/// Generates `(train, test)` rows; test MRs never occur in the training split.
pub fn generate(cfg: &SynthConfig) -> (Vec<RawRow>, Vec<RawRow>) {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut seen = HashSet::new();
    let mut split = |count: usize, rng: &mut ChaCha8Rng| {
        let mut rows = Vec::new();
        let mut made = 0;
        while made < count {
            let mr = sample_mr(rng);
            let pairs = mr.pairs();
            if !seen.insert(canonical_key(&pairs)) {
                continue;
            }
            made += 1;
            let mr_string = format_mr(&pairs);
            let refs = rng.gen_range(cfg.refs_per_mr.0..=cfg.refs_per_mr.1);
            for _ in 0..refs {
                rows.push(RawRow {
                    mr: mr_string.clone(),
                    text: realise(rng, &mr, cfg.omission_rate),
                });
            }
        }
        rows.shuffle(rng);
        rows
    };
    let train = split(cfg.train_mrs, &mut rng);
    let test = split(cfg.test_mrs, &mut rng);
    (train, test)
}

import init, { score_sentence, made_connectivity, ToyTrainer } from "../pkg/dualcycle_demo.js";

const $ = (id) => document.getElementById(id);

function guard(out, f) {
  try {
    out.classList.remove("err");
    f();
  } catch (e) {
    out.classList.add("err");
    out.textContent = String(e.message ?? e);
  }
}

function grid(reach, ordering) {
  const t = document.createElement("table");
  t.className = "grid";
  t.title = "ordering " + ordering.join(" ");
  for (const row of reach) {
    const tr = t.insertRow();
    for (const on of row) {
      const td = tr.insertCell();
      if (on) td.className = "on";
    }
  }
  return t;
}

let trainer = null;

function fillMrs() {
  const sel = $("mr");
  sel.replaceChildren();
  for (const mr of JSON.parse(trainer.example_mrs())) {
    sel.add(new Option(mr, mr));
  }
}

await init();
$("status").textContent = "Ready.";

$("score").onclick = () => guard($("score-out"), () => {
  const s = JSON.parse(score_sentence($("hyp").value, $("refs").value));
  $("score-out").textContent =
    `tokens   ${s.tokens.join(" ")}\n` +
    `BLEU     ${s.bleu.toFixed(4)}\nROUGE-1  ${s.rouge_1.toFixed(4)}\n` +
    `ROUGE-2  ${s.rouge_2.toFixed(4)}\nROUGE-L  ${s.rouge_l.toFixed(4)}`;
});

$("masks").onclick = () => guard($("mask-out"), () => {
  const sets = JSON.parse(made_connectivity(+$("dim").value, +$("hidden").value, +$("orders").value, +$("mseed").value));
  $("mask-out").replaceChildren(...sets.map((s) => grid(s.reach, s.ordering)));
});

$("reset").onclick = () => guard($("train-out"), () => {
  trainer = new ToyTrainer($("scheme").value, +$("tseed").value);
  $("train-out").textContent = `scheme ${trainer.scheme()}\n`;
  fillMrs();
  for (const id of ["train", "gen", "und"]) $(id).disabled = false;
});

$("train").onclick = () => guard($("train-out"), () => {
  for (const e of JSON.parse(trainer.train(5))) {
    $("train-out").textContent +=
      `epoch ${e.epoch}  primal ${e.primal.toFixed(4)}  dual ${e.dual.toFixed(4)}\n`;
  }
});

$("gen").onclick = () => guard($("cycle-out"), () => {
  const s = trainer.generate($("mr").value);
  $("sent").value = s;
  $("cycle-out").textContent = `generated: ${s}`;
});

$("und").onclick = () => guard($("cycle-out"), () => {
  $("cycle-out").textContent = `understood: ${trainer.understand($("sent").value)}`;
});

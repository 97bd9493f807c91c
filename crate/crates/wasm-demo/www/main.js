import init, { sample_inputs, score, classes, pruning_preview } from "./pkg/prime_wasm.js";

const $ = (id) => document.getElementById(id);
const staged = new Set();

function fail(el, e) {
  el.innerHTML = "";
  const p = document.createElement("p");
  p.className = "err";
  p.textContent = String(e.message ?? e);
  el.append(p);
}

function fmt(x) {
  return x.toFixed(4);
}

function runScore() {
  try {
    const out = JSON.parse(score($("hazards").value, $("population").value, +$("start").value, +$("end").value));
    $("score-info").textContent =
      `${out.rows.length} region-years from ${out.events_used} events; ${out.rejected} rows rejected` +
      (out.warnings.length ? `; ${out.warnings.join("; ")}` : "");
    const head = "<tr><th>region</th><th>year</th><th>vulnerability</th><th>adaptability</th><th>resilience</th></tr>";
    const rows = out.rows.map((r) => {
      const [v, a, s] = r.classes;
      return `<tr><td>${r.region_code}</td><td>${r.period}</td>` +
        `<td class="c${v}">${fmt(r.vulnerability)}</td>` +
        `<td class="c${5 - a}">${fmt(r.adaptability)}</td>` +
        `<td class="c${5 - s}">${fmt(r.resilience)}</td></tr>`;
    });
    $("scores").innerHTML = head + rows.join("");
  } catch (e) {
    fail($("scores"), e);
  }
}

function runClasses() {
  try {
    const out = JSON.parse(classes($("values").value));
    $("classes-out").textContent =
      `classes ${JSON.stringify(out.classes)}, boundaries ${out.boundaries.map(fmt).join(", ")}` +
      (out.warning ? ` (${out.warning})` : "");
  } catch (e) {
    fail($("classes-out"), e);
  }
}

function runPreview() {
  const t = +$("threshold").value;
  $("threshold-value").textContent = t.toFixed(2);
  try {
    const report = JSON.parse(pruning_preview($("matrix").value, t, JSON.stringify([...staged])));
    const removed = new Map(report.removed.map((r) => [r.name, r]));
    const list = document.createElement("ul");
    for (const name of [...report.retained, ...removed.keys()]) {
      const li = document.createElement("li");
      const r = removed.get(name);
      li.textContent = r
        ? `${name}: ${r.reason}${r.trigger ? ` with ${r.trigger} (r = ${fmt(r.r)})` : ""}`
        : name;
      if (r) li.className = "drop";
      li.onclick = () => {
        staged.has(name) ? staged.delete(name) : staged.add(name);
        runPreview();
      };
      list.append(li);
    }
    $("preview").replaceChildren(list);
  } catch (e) {
    fail($("preview"), e);
  }
}

await init();
$("status").textContent = "Module loaded. Everything below runs locally in WebAssembly.";
$("sample").onclick = () => {
  const s = JSON.parse(sample_inputs(15, BigInt(Date.now() % 1000)));
  $("hazards").value = s.hazards;
  $("population").value = s.population;
  runScore();
};
$("run-score").onclick = runScore;
$("run-classes").onclick = runClasses;
$("threshold").oninput = runPreview;
$("matrix").oninput = runPreview;
runPreview();

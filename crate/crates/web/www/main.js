import init, { generateCohort, credibilityThresholds, selectFeatures } from "./pkg/credence_web.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

function guard(target, f) {
  try {
    f();
  } catch (e) {
    $(target).innerHTML = `<p class="err">${e.message ?? e}</p>`;
  }
}

function drawScatter(points) {
  const c = $("scatter");
  const g = c.getContext("2d");
  g.clearRect(0, 0, c.width, c.height);
  const x = (v) => 40 + ((v - 3) / 24) * (c.width - 60);
  const y = (v) => c.height - 30 - ((v - 15) / 35) * (c.height - 50);
  g.strokeStyle = "#bbb";
  for (const edge of [16.5, 22.5]) {
    g.beginPath();
    g.moveTo(x(edge), 10);
    g.lineTo(x(edge), c.height - 30);
    g.stroke();
  }
  g.fillStyle = "#444";
  g.fillText("credibility", c.width / 2 - 20, c.height - 8);
  g.fillText("baseline", 2, 12);
  for (const [cred, base, response] of points) {
    g.fillStyle = response === true ? "#1a7f37" : response === false ? "#cf222e" : "#999";
    g.beginPath();
    g.arc(x(cred + (Math.random() - 0.5) * 0.4), y(base), 3, 0, 2 * Math.PI);
    g.fill();
  }
}

function thresholdTable(rows) {
  const head = "<tr><th>threshold</th><th>frequency</th><th>a b c d</th><th>OR</th><th>p</th></tr>";
  const body = rows.map((r) => `<tr><td>${r.threshold}</td><td>${r.frequency.toFixed(2)}</td>` +
    `<td>${r.table.join(" ")}</td><td>${r.odds_ratio_infinite ? "inf" : r.odds_ratio.toFixed(3)}${r.correction_applied ? "*" : ""}</td>` +
    `<td>${r.p_value.toExponential(2)}</td></tr>`).join("");
  return `<table>${head}${body}</table>`;
}

await init();

$("gen").onclick = () => guard("gen-out", () => {
  const r = JSON.parse(generateCohort(num("n"), num("seed"), num("corr"), num("miss")));
  $("gen-out").textContent = `${r.patients} patients, ${r.responders} responders, ${r.remitters} remitters, ${r.missing_cells} missing cells (green responds, red does not)`;
  drawScatter(r.points);
});

$("thr").onclick = () => guard("thr-out", () => {
  const r = JSON.parse(credibilityThresholds(num("n"), num("seed"), num("m"), $("thr-outcome").value));
  $("thr-out").innerHTML = `<p>cutpoints: ${r.cutpoints.map((c) => `${c.value} (${c.frequency.toFixed(2)})`).join(", ") || "none"}</p>` +
    thresholdTable(r.rows) + "<p>planted predicates</p>" + thresholdTable(r.planted);
});

$("sel").onclick = () => guard("sel-out", () => {
  const r = JSON.parse(selectFeatures(num("n"), num("seed"), $("model").value, $("sel-outcome").value, num("sel-m"), num("gate")));
  const steps = r.steps.map((s, i) => `${i + 1}. ${s.feature} (AUC ${s.auc.toFixed(3)})`).join("\n") || "no feature cleared the gate";
  $("sel-out").innerHTML = `<pre>${steps}</pre>`;
});

import init, { solve_single_notch, q8_second_derivatives, tcn_causality } from "./pkg/ifenn_web.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

function call(f, info) {
  const out = JSON.parse(f());
  if (out.error) {
    info.textContent = out.error;
    info.className = "error";
    return null;
  }
  info.className = "";
  return out;
}

function axes(ctx, w, h) {
  ctx.clearRect(0, 0, w, h);
  ctx.strokeStyle = "#888";
  ctx.beginPath();
  ctx.moveTo(30, 10);
  ctx.lineTo(30, h - 20);
  ctx.lineTo(w - 10, h - 20);
  ctx.stroke();
}

function line(ctx, xs, ys, w, h, color) {
  const xmax = Math.max(...xs) || 1;
  const ymax = Math.max(...ys.map(Math.abs)) || 1;
  ctx.strokeStyle = color;
  ctx.beginPath();
  xs.forEach((x, i) => {
    const px = 30 + (x / xmax) * (w - 45);
    const py = h - 20 - (Math.abs(ys[i]) / ymax) * (h - 35);
    i === 0 ? ctx.moveTo(px, py) : ctx.lineTo(px, py);
  });
  ctx.stroke();
}

function solve() {
  const info = $("solve-info");
  info.textContent = "solving...";
  setTimeout(() => {
    const t0 = performance.now();
    const r = call(() => solve_single_notch(num("h"), $("q8").checked, num("n"), num("lf")), info);
    if (!r) return;
    const its = r.iterations.reduce((a, b) => a + b, 0);
    info.textContent = `${r.nodes} nodes, ${r.system_rows} equations, ${its} Newton iterations, ${((performance.now() - t0) / 1000).toFixed(1)} s`;
    const c = $("curve"), ctx = c.getContext("2d");
    axes(ctx, c.width, c.height);
    line(ctx, [0, ...r.lf], [0, ...r.reaction], c.width, c.height, "#c33");
    ctx.fillStyle = "#333";
    ctx.fillText("reaction vs loadfactor", 40, 20);
    const d = $("damage"), dctx = d.getContext("2d");
    const s = d.width / r.width, e = r.elem_size * s;
    dctx.clearRect(0, 0, d.width, d.height);
    for (const [x, y, dmg] of r.elements) {
      const v = Math.round(255 * (1 - dmg));
      dctx.fillStyle = `rgb(255,${v},${v})`;
      dctx.fillRect(x * s - e / 2, d.height - y * s - e / 2, e + 0.5, e + 0.5);
    }
  }, 10);
}

function shape() {
  const info = $("shape-info");
  const r = call(() => q8_second_derivatives(num("xi"), num("eta")), info);
  if (!r) return;
  info.textContent = `table entries that disagree with the analytic basis: ${r.discrepancies.join(", ") || "none"}`;
  const names = ["N,ξξ", "N,ηη", "N,ξη"];
  let html = "<table><tr><th>node</th>" + names.map((n) => `<th>${n} analytic</th><th>${n} table</th>`).join("") + "</tr>";
  r.analytic.forEach((row, a) => {
    html += `<tr><td>${a + 1}</td>`;
    row.forEach((v, c) => {
      const t = r.tabulated[a][c];
      const bad = Math.abs(v - t) > 1e-12 ? " class=bad" : "";
      html += `<td>${v.toFixed(4)}</td><td${bad}>${t.toFixed(4)}</td>`;
    });
    html += "</tr>";
  });
  $("shape-table").innerHTML = html + "</table>";
}

function tcn() {
  const info = $("tcn-info");
  const r = call(() => tcn_causality(num("dil"), num("k"), num("nf"), 40, num("tp"), 1), info);
  if (!r) return;
  info.textContent = `${r.n_params} parameters, receptive field ${r.receptive_field} increments; bars show |Δ output| per increment`;
  const c = $("change"), ctx = c.getContext("2d");
  ctx.clearRect(0, 0, c.width, c.height);
  const m = Math.max(...r.change) || 1, bw = c.width / r.change.length;
  r.change.forEach((v, t) => {
    const h = (v / m) * (c.height - 10);
    ctx.fillStyle = t === num("tp") ? "#c33" : "#36c";
    ctx.fillRect(t * bw + 1, c.height - h, bw - 2, h);
  });
}

await init();
$("solve").onclick = solve;
$("shape").onclick = shape;
$("tcn").onclick = tcn;
shape();
tcn();

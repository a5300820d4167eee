import init, { tau_profile, k_scan, det_circle } from "./pkg/kohnlab_demo.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

function problem() {
  return { depth: num("depth"), radius: num("radius"), m: Math.round(num("m")) };
}

function report(err) {
  $("status").textContent = err ? String(err) : "";
}

const tick = (v) => (v !== 0 && Math.abs(v) < 0.01 ? v.toExponential(1) : v.toFixed(2));

// Map data ranges onto a canvas with a small margin.
function frame(canvas, xmin, xmax, ymin, ymax) {
  const ctx = canvas.getContext("2d");
  const pad = 36;
  const w = canvas.width - 2 * pad;
  const h = canvas.height - 2 * pad;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  ctx.strokeStyle = "#ccc";
  ctx.strokeRect(pad, pad, w, h);
  ctx.fillStyle = "#555";
  ctx.font = "11px sans-serif";
  ctx.fillText(tick(xmin), pad, canvas.height - pad + 14);
  ctx.fillText(tick(xmax), pad + w - 24, canvas.height - pad + 14);
  ctx.fillText(tick(ymax), 2, pad + 4);
  ctx.fillText(tick(ymin), 2, pad + h);
  const x = (v) => pad + ((v - xmin) / (xmax - xmin)) * w;
  const y = (v) => pad + h - ((v - ymin) / (ymax - ymin)) * h;
  return { ctx, x, y, pad, h };
}

// Draw a polyline, breaking at nulls and at jumps larger than `gap`.
function line(f, xs, ys, color, gap = Infinity, dash = []) {
  const { ctx } = f;
  ctx.strokeStyle = color;
  ctx.setLineDash(dash);
  ctx.beginPath();
  let open = false;
  for (let i = 0; i < xs.length; i++) {
    if (ys[i] === null || ys[i] === undefined) { open = false; continue; }
    if (open && Math.abs(ys[i] - ys[i - 1]) > gap) open = false;
    if (open) ctx.lineTo(f.x(xs[i]), f.y(ys[i]));
    else ctx.moveTo(f.x(xs[i]), f.y(ys[i]));
    open = true;
  }
  ctx.stroke();
  ctx.setLineDash([]);
}

function marker(f, xv, color) {
  f.ctx.strokeStyle = color;
  f.ctx.beginPath();
  f.ctx.moveTo(f.x(xv), f.pad);
  f.ctx.lineTo(f.x(xv), f.pad + f.h);
  f.ctx.stroke();
}

function drawTau() {
  const p = problem();
  const k = num("tau-k");
  $("tau-k-value").textContent = k.toFixed(3);
  let data;
  try {
    data = JSON.parse(tau_profile(p.depth, p.radius, k, p.m, 720));
    report();
  } catch (e) { report(e); return; }
  const taus = data.points.map((q) => q.tau);
  const f = frame($("tau-plot"), 0, Math.PI, -Math.PI / 2, Math.PI / 2);
  const detMax = Math.max(...data.points.map((q) => Math.abs(q.det_a))) || 1;
  line(f, taus, data.points.map((q) => (q.det_a / detMax) * 1.4), "#999");
  line(f, taus, data.points.map((q) => q.eta_v), "#1565c0", 1.5);
  if (data.exact !== null) line(f, [0, Math.PI], [data.exact, data.exact], "#6a1b9a", Infinity, [5, 4]);
  for (const s of data.analysis.singular_taus) marker(f, s.tau, "#c62828");
  const o = data.analysis.optimum;
  if (o) marker(f, o.tau0, "#2e7d32");
  const lines = [];
  if (o) lines.push(`tau0 = ${o.tau0.toFixed(6)}  eta0 = ${o.eta0.toFixed(8)}  slope = ${o.slope_at_tau0.toExponential(3)}`);
  if (data.exact !== null) lines.push(`exact = ${data.exact.toFixed(8)}`);
  for (const s of data.analysis.singular_taus) {
    lines.push(`singular tau = ${s.tau.toFixed(6)}  f^2/Gamma^2 = ${s.ratio.toExponential(3)}  ${s.class}`);
  }
  $("tau-summary").textContent = lines.join("\n");
}

function drawScan() {
  const p = problem();
  let rows;
  try {
    rows = JSON.parse(k_scan(p.depth, p.radius, num("scan-min"), num("scan-max"), Math.round(num("scan-count")), p.m));
    report();
  } catch (e) { report(e); return; }
  const ks = rows.map((r) => r.k);
  const f = frame($("scan-plot"), ks[0], ks[ks.length - 1], -Math.PI / 2, Math.PI / 2);
  line(f, ks, rows.map((r) => r.exact), "#6a1b9a", 1.5);
  line(f, ks, rows.map((r) => r.re_eta_c), "#ef6c00", 1.5, [6, 3]);
  line(f, ks, rows.map((r) => r.eta0), "#1565c0", 1.5, [2, 3]);
  line(f, ks, rows.map((r) => (r.im_eta_c === null ? null : 100 * r.im_eta_c)), "#00838f");
}

function drawCircle() {
  const p = problem();
  const k = num("circle-k");
  $("circle-k-value").textContent = k.toFixed(3);
  let data;
  try {
    data = JSON.parse(det_circle(p.depth, p.radius, k, p.m, 360));
    report();
  } catch (e) { report(e); return; }
  const r = 1.15 * Math.max(data.radius, ...data.points.map((q) => Math.abs(q.det_real))) || 1;
  const f = frame($("circle-plot"), -r, r, -r, r);
  f.ctx.strokeStyle = "#1565c0";
  f.ctx.beginPath();
  data.points.forEach((q, i) => (i ? f.ctx.lineTo(f.x(q.re), f.y(q.im)) : f.ctx.moveTo(f.x(q.re), f.y(q.im))));
  f.ctx.stroke();
  // the real determinant, drawn along the real axis at each tau
  f.ctx.fillStyle = "#c62828";
  for (const q of data.points) f.ctx.fillRect(f.x(q.det_real) - 1, f.y(0) - 1, 2, 2);
  line(f, [-r, r], [0, 0], "#ddd");
  line(f, [0, 0], [-r, r], "#ddd");
}

function redraw() {
  drawTau();
  drawScan();
  drawCircle();
}

await init();
for (const id of ["depth", "radius", "m"]) $(id).addEventListener("change", redraw);
$("tau-k").addEventListener("input", drawTau);
$("circle-k").addEventListener("input", drawCircle);
$("scan-run").addEventListener("click", drawScan);
redraw();

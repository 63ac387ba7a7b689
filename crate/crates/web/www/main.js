// Build with:
//   cargo build -p ddlab-web --target wasm32-unknown-unknown --release
//   wasm-bindgen --target web --out-dir crates/web/www/pkg \
//     target/wasm32-unknown-unknown/release/ddlab_web.wasm
import init, { mse_curve, mse_simulation, size_pmf } from "./pkg/ddlab_web.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

function problem() {
  return [$("profile").value, num("d"), num("kappa"), num("sigma2"), num("snr")];
}

function run(f) {
  $("status").textContent = "";
  try {
    f();
  } catch (e) {
    $("status").textContent = e.message ?? String(e);
  }
}

let lastCurve = null;
let marker = null;

function plotCurve() {
  const canvas = $("curve");
  const ctx = canvas.getContext("2d");
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  if (!lastCurve) return;
  const pts = [];
  for (let i = 0; i < lastCurve.length; i += 3) pts.push([lastCurve[i], Math.log10(lastCurve[i + 1])]);
  const xs = pts.map((p) => p[0]);
  const ys = pts.map((p) => p[1]).filter(Number.isFinite);
  if (marker) ys.push(Math.log10(marker.mean));
  const [x0, x1] = [Math.min(...xs), Math.max(...xs)];
  const [y0, y1] = [Math.min(...ys), Math.max(...ys) + 1e-9];
  const pad = 30;
  const sx = (x) => pad + ((x - x0) / (x1 - x0)) * (canvas.width - 2 * pad);
  const sy = (y) => canvas.height - pad - ((y - y0) / (y1 - y0)) * (canvas.height - 2 * pad);

  ctx.strokeStyle = "#999";
  ctx.strokeRect(pad, pad, canvas.width - 2 * pad, canvas.height - 2 * pad);
  ctx.fillStyle = "#555";
  ctx.fillText(`n = ${x0}`, pad, canvas.height - 10);
  ctx.fillText(`n = ${x1}`, canvas.width - pad - 40, canvas.height - 10);
  ctx.fillText(`log10 MSE in [${y0.toFixed(2)}, ${y1.toFixed(2)}]`, pad, 20);

  const d = num("d");
  ctx.strokeStyle = "#ccc";
  ctx.beginPath();
  ctx.moveTo(sx(d), pad);
  ctx.lineTo(sx(d), canvas.height - pad);
  ctx.stroke();

  ctx.strokeStyle = "#1f5fa8";
  ctx.beginPath();
  pts.forEach(([x, y], i) => (i ? ctx.lineTo(sx(x), sy(y)) : ctx.moveTo(sx(x), sy(y))));
  ctx.stroke();

  if (marker) {
    ctx.fillStyle = "#c33";
    const y = sy(Math.log10(marker.mean));
    ctx.beginPath();
    ctx.arc(sx(marker.n), y, 4, 0, 2 * Math.PI);
    ctx.fill();
  }
}

function drawCurve() {
  lastCurve = mse_curve(...problem());
  marker = null;
  plotCurve();
}

function simulate() {
  const n = num("n");
  const [mean, se] = mse_simulation(...problem(), n, num("trials"), num("seed"));
  let closed = null;
  if (lastCurve) {
    for (let i = 0; i < lastCurve.length; i += 3) if (lastCurve[i] === n) closed = lastCurve[i + 1];
  }
  $("simout").textContent =
    `simulated MSE ${mean.toPrecision(5)} ± ${se.toPrecision(3)}` +
    (closed === null ? "" : `, surrogate ${closed.toPrecision(5)}`);
  marker = { n, mean };
  plotCurve();
}

function drawPmf() {
  const [profile, d, kappa] = problem();
  const pmf = size_pmf(profile, d, kappa, num("n"));
  const canvas = $("sizes");
  const ctx = canvas.getContext("2d");
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  const top = Math.max(...pmf);
  const w = (canvas.width - 20) / pmf.length;
  ctx.fillStyle = "#1f5fa8";
  pmf.forEach((p, k) => {
    const h = (p / top) * (canvas.height - 30);
    ctx.fillRect(10 + k * w, canvas.height - 15 - h, Math.max(w - 1, 1), h);
  });
  ctx.fillStyle = "#555";
  ctx.fillText("K = 0", 10, canvas.height - 2);
  ctx.fillText(`K = ${pmf.length - 1}`, canvas.width - 50, canvas.height - 2);
}

await init();
$("draw").onclick = () => run(drawCurve);
$("simulate").onclick = () => run(simulate);
$("pmf").onclick = () => run(drawPmf);
run(drawCurve);

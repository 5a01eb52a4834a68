import init, { Demo } from "../pkg/nulldist_web.js";

const canvas = document.getElementById("view");
const ctx = canvas.getContext("2d");
const status = document.getElementById("status");
const inputs = ["spacetime", "time", "h", "mode"].map((id) => document.getElementById(id));

let demo = null;
let last = null;

// Dark blue through teal to yellow.
function ramp(u) {
  const stops = [[68, 1, 84], [59, 82, 139], [33, 145, 140], [94, 201, 98], [253, 231, 37]];
  const x = Math.min(Math.max(u, 0), 1) * (stops.length - 1);
  const i = Math.min(Math.floor(x), stops.length - 2);
  const f = x - i;
  return stops[i].map((a, k) => Math.round(a + f * (stops[i + 1][k] - a)));
}

function paint(values, colour) {
  const rows = demo.rows();
  const cols = demo.cols();
  const img = new ImageData(cols, rows);
  for (let i = 0; i < rows * cols; i++) {
    const [r, g, b] = colour(values[i]);
    img.data.set([r, g, b, 255], 4 * i);
  }
  const off = new OffscreenCanvas(cols, rows);
  off.getContext("2d").putImageData(img, 0, 0);
  ctx.imageSmoothingEnabled = false;
  ctx.drawImage(off, 0, 0, canvas.width, canvas.height);
}

function scalarColour(values) {
  let lo = Infinity;
  let hi = -Infinity;
  for (const v of values) {
    if (Number.isFinite(v)) {
      lo = Math.min(lo, v);
      hi = Math.max(hi, v);
    }
  }
  const span = hi > lo ? hi - lo : 1;
  return (v) => (Number.isFinite(v) ? ramp((v - lo) / span) : [40, 40, 40]);
}

function render(t, x) {
  const mode = inputs[3].value;
  const start = performance.now();
  let text;
  if (mode === "dhat") {
    const d = demo.null_distance(t, x);
    paint(d, scalarColour(d));
    text = "null distance";
  } else if (mode === "reach") {
    const m = demo.reach_mask(t, x);
    const colours = { 0: [235, 235, 235], 1: [90, 140, 220], 2: [230, 120, 60], 255: [40, 40, 40] };
    paint(m, (v) => colours[v]);
    text = "future (orange) and past (blue)";
  } else {
    const w = demo.optical(t, x, mode === "omega+");
    paint(w, scalarColour(w));
    text = "optical function, grey outside the chart";
  }
  const ms = (performance.now() - start).toFixed(0);
  status.textContent = `${text} from (t, x) = (${t.toFixed(2)}, ${x.toFixed(2)}), ${demo.rows()}x${demo.cols()} nodes, ${ms} ms`;
}

function rebuild() {
  try {
    demo = new Demo(inputs[0].value, inputs[1].value, parseFloat(inputs[2].value));
  } catch (e) {
    status.textContent = `error: ${e.message ?? e}`;
    return;
  }
  const [t0, t1, x0, x1] = demo.bounds();
  last = last ?? [0.5 * (t0 + t1), 0.5 * (x0 + x1)];
  last = [Math.min(Math.max(last[0], t0), t1), Math.min(Math.max(last[1], x0), x1)];
  safeRender(...last);
}

function safeRender(t, x) {
  try {
    render(t, x);
  } catch (e) {
    status.textContent = `error: ${e.message ?? e}`;
  }
}

canvas.addEventListener("click", (ev) => {
  if (!demo) return;
  const rect = canvas.getBoundingClientRect();
  const [t0, t1, x0, x1] = demo.bounds();
  const x = x0 + ((ev.clientX - rect.left) / rect.width) * (x1 - x0);
  const t = t1 - ((ev.clientY - rect.top) / rect.height) * (t1 - t0);
  last = [t, x];
  safeRender(t, x);
});

inputs.slice(0, 3).forEach((el) => el.addEventListener("change", rebuild));
inputs[3].addEventListener("change", () => demo && safeRender(...last));

await init();
rebuild();

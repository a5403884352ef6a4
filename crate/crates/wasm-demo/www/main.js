import init, { rolloutPath, laneChange, slstmTrace, motionLimits } from "./pkg/xtrack_wasm_demo.js";

const BLUE = "#1f77b4";
const RED = "#d62728";

function params(section) {
  const out = {};
  for (const input of section.querySelectorAll("input")) {
    out[input.name] = input.type === "checkbox" ? input.checked : Number(input.value);
    const shown = input.parentElement.querySelector("output");
    if (shown) shown.textContent = input.value;
  }
  return out;
}

function bind(id, draw) {
  const section = document.getElementById(id);
  const canvas = section.querySelector("canvas");
  const readout = section.querySelector(".readout");
  const run = () => {
    try {
      readout.textContent = draw(canvas, params(section));
    } catch (e) {
      readout.textContent = `error: ${e.message ?? e}`;
    }
  };
  section.addEventListener("input", run);
  run();
}

// Series are flat [x0, y0, x1, y1, ...] arrays. With `equal`, both axes
// share one scale.
function plot(canvas, series, { equal = false } = {}) {
  const ctx = canvas.getContext("2d");
  const { width, height } = canvas;
  const pad = 24;
  ctx.clearRect(0, 0, width, height);
  let [x0, x1, y0, y1] = [Infinity, -Infinity, Infinity, -Infinity];
  for (const { data } of series) {
    for (let i = 0; i < data.length; i += 2) {
      if (!Number.isFinite(data[i + 1])) continue;
      x0 = Math.min(x0, data[i]); x1 = Math.max(x1, data[i]);
      y0 = Math.min(y0, data[i + 1]); y1 = Math.max(y1, data[i + 1]);
    }
  }
  if (!Number.isFinite(x0)) return;
  if (x1 - x0 < 1e-9) { x0 -= 1; x1 += 1; }
  if (y1 - y0 < 1e-9) { y0 -= 1; y1 += 1; }
  let sx = (width - 2 * pad) / (x1 - x0);
  let sy = (height - 2 * pad) / (y1 - y0);
  if (equal) sx = sy = Math.min(sx, sy);
  const px = (x) => pad + (x - x0) * sx;
  const py = (y) => height - pad - (y - y0) * sy;

  ctx.strokeStyle = "#bbb";
  ctx.lineWidth = 1;
  if (y0 < 0 && y1 > 0) {
    ctx.beginPath(); ctx.moveTo(pad, py(0)); ctx.lineTo(width - pad, py(0)); ctx.stroke();
  }
  for (const { data, color, dots } of series) {
    ctx.strokeStyle = ctx.fillStyle = color;
    ctx.lineWidth = 2;
    ctx.beginPath();
    let pen = false;
    for (let i = 0; i < data.length; i += 2) {
      if (!Number.isFinite(data[i + 1])) { pen = false; continue; }
      pen ? ctx.lineTo(px(data[i]), py(data[i + 1])) : ctx.moveTo(px(data[i]), py(data[i + 1]));
      pen = true;
    }
    ctx.stroke();
    if (dots) {
      for (let i = 0; i < data.length; i += 2) {
        ctx.beginPath(); ctx.arc(px(data[i]), py(data[i + 1]), 3, 0, 2 * Math.PI); ctx.fill();
      }
    }
  }
}

function indexed(values) {
  const out = new Float64Array(2 * values.length);
  values.forEach((v, k) => { out[2 * k] = k; out[2 * k + 1] = v; });
  return out;
}

await init();
const [aMax, yawMax] = motionLimits();

bind("rollout", (canvas, p) => {
  const path = rolloutPath(p.speed, 0, p.accel, p.yaw, p.steps, 0.2, p.bounded);
  plot(canvas, [{ data: path.positions, color: RED, dots: true }], { equal: true });
  const a = path.a_x[0], w = path.psi_dot[0] * 180 / Math.PI;
  return `applied a = ${a.toFixed(3)} m/s² (limit ${aMax}), yaw rate = ${w.toFixed(2)} deg/s (limit ${yawMax.toFixed(2)})`;
});

bind("lanechange", (canvas, p) => {
  const span = Math.max(p.duration + 1, 5);
  const r = laneChange(p.speed, p.width, p.duration, span, p.dt);
  plot(canvas, [
    { data: r.truth, color: BLUE, dots: true },
    { data: r.replay, color: RED },
  ]);
  return `blue: sampled track, red: replay of derived controls; max error ${(100 * r.max_error).toFixed(2)} cm over ${r.truth.length / 2} samples`;
});

bind("slstm", (canvas, p) => {
  const t = slstmTrace(p.steps, p.seed, p.bias);
  plot(canvas, [
    { data: indexed(t.stabilized), color: BLUE },
    { data: indexed(t.naive), color: RED },
  ]);
  const naive = t.overflow_step < 0 ? "stays finite" : `overflows at step ${t.overflow_step}`;
  return `first hidden unit; blue: stabilized (finite throughout), red: naive exp gating ${naive}`;
});

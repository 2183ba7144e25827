import init, { simulateMarket, optionCurve, detectSynthetic } from "./pkg/informed_wasm_demo.js";

function values(form) {
  const out = {};
  for (const el of form.elements) {
    if (el.name) out[el.name] = el.value;
  }
  return out;
}

function extent(xs) {
  let lo = Infinity, hi = -Infinity;
  for (const x of xs) {
    if (x === null || !Number.isFinite(x)) continue;
    if (x < lo) lo = x;
    if (x > hi) hi = x;
  }
  if (lo === hi) { lo -= 1; hi += 1; }
  return [lo, hi];
}

// Line chart of several series sharing one x axis.
function lines(canvas, xs, series, title) {
  const ctx = canvas.getContext("2d");
  const { width: w, height: h } = canvas;
  const pad = 40;
  ctx.clearRect(0, 0, w, h);
  const [x0, x1] = extent(xs);
  const [y0, y1] = extent(series.flatMap(s => s.ys));
  const px = x => pad + (x - x0) / (x1 - x0) * (w - 2 * pad);
  const py = y => h - pad / 2 - (y - y0) / (y1 - y0) * (h - pad);
  ctx.strokeStyle = "#ccc";
  ctx.strokeRect(pad, pad / 2, w - 2 * pad, h - pad);
  ctx.fillStyle = "#555";
  ctx.font = "11px sans-serif";
  ctx.fillText(title, pad + 4, pad / 2 + 12);
  ctx.fillText(y1.toPrecision(4), 2, pad / 2 + 10);
  ctx.fillText(y0.toPrecision(4), 2, h - pad / 2);
  for (const s of series) {
    ctx.strokeStyle = s.color;
    ctx.setLineDash(s.dash || []);
    ctx.beginPath();
    let pen = false;
    s.ys.forEach((y, i) => {
      if (y === null || !Number.isFinite(y)) { pen = false; return; }
      if (pen) ctx.lineTo(px(xs[i]), py(y)); else ctx.moveTo(px(xs[i]), py(y));
      pen = true;
    });
    ctx.stroke();
  }
  ctx.setLineDash([]);
}

// (rho, delta) plane on [-1, 1]^2 with the pointwise detection regions shaded.
function plane(canvas, rhos, deltas, identified) {
  const ctx = canvas.getContext("2d");
  const { width: w, height: h } = canvas;
  const px = r => (r + 1) / 2 * w;
  const py = d => h - (d + 1) / 2 * h;
  ctx.clearRect(0, 0, w, h);
  ctx.fillStyle = "rgba(40, 120, 220, 0.15)";
  ctx.beginPath();
  ctx.moveTo(px(0), py(0)); ctx.lineTo(px(-1), py(0)); ctx.lineTo(px(-1), py(1));
  ctx.closePath(); ctx.fill();
  ctx.beginPath();
  ctx.moveTo(px(0), py(0)); ctx.lineTo(px(1), py(-1)); ctx.lineTo(px(0), py(-1));
  ctx.closePath(); ctx.fill();
  ctx.strokeStyle = "#999";
  ctx.beginPath();
  ctx.moveTo(px(-1), py(0)); ctx.lineTo(px(1), py(0));
  ctx.moveTo(px(0), py(-1)); ctx.lineTo(px(0), py(1));
  ctx.stroke();
  ctx.fillStyle = "#555";
  ctx.font = "11px sans-serif";
  ctx.fillText("rho", w - 24, py(0) - 4);
  ctx.fillText("delta", px(0) + 4, 12);
  rhos.forEach((r, i) => {
    ctx.fillStyle = identified[i] ? "rgba(200, 40, 40, 0.6)" : "rgba(120, 120, 120, 0.35)";
    ctx.fillRect(px(Math.max(-1, Math.min(1, r))) - 1.5, py(Math.max(-1, Math.min(1, deltas[i]))) - 1.5, 3, 3);
  });
}

function guard(out, f) {
  try {
    out.classList.remove("err");
    f();
  } catch (e) {
    out.classList.add("err");
    out.textContent = String(e.message || e);
  }
}

function runMarket() {
  const v = values(document.getElementById("market"));
  const out = document.getElementById("market-out");
  guard(out, () => {
    const r = JSON.parse(simulateMarket(+v.psi_bar, +v.rho, +v.beta, +v.sigma_z, +v.sigma_u, +v.lambda, +v.steps, +v.seed));
    const idx = r.log_prices.map((_, i) => i);
    lines(document.getElementById("market-price"), idx, [{ ys: r.log_prices, color: "#1f5fa8" }], "ln S");
    lines(document.getElementById("market-psi"), idx, [{ ys: r.psi, color: "#a85a1f" }], "psi");
    const fmt = x => (x === null ? "n/a" : x.toFixed(4));
    out.textContent =
      `lambda = ${r.lambda.toPrecision(4)}\n` +
      `ARMA(1,1) of returns: rho = ${fmt(r.arma_rho)}, delta = ${fmt(r.arma_delta)}\n` +
      `closed-form delta = ${fmt(r.closed_form_delta)}, routes agree: ${r.consistent}`;
  });
}

function runOption() {
  const v = values(document.getElementById("option"));
  const out = document.getElementById("option-out");
  guard(out, () => {
    const r = JSON.parse(optionCurve(v.kind === "call", +v.strike, +v.tau, +v.rate, +v.vol, 400));
    lines(document.getElementById("option-delta"), r.spot, [{ ys: r.delta, color: "#1f5fa8" }], "delta vs spot");
    lines(document.getElementById("option-q"), r.spot, [
      { ys: r.d1, color: "#999", dash: [4, 4] },
      { ys: r.q, color: "#a81f4f" },
    ], "quantile of delta (solid) and d1 (dashed)");
    const lost = r.q.filter(q => q === null).length;
    out.textContent = lost ? `${lost} of ${r.q.length} deltas round to a bound and have no quantile` : "";
  });
}

function runDetect() {
  const v = values(document.getElementById("detect"));
  const out = document.getElementById("detect-out");
  guard(out, () => {
    const r = JSON.parse(detectSynthetic(+v.rho, +v.delta, +v.n, +v.window, +v.seed));
    plane(document.getElementById("detect-plane"), r.window_rho, r.window_delta, r.identified);
    out.textContent =
      `verdict: ${r.verdict} (branch ${r.branch})\n` +
      `sum rho = ${r.sum_rho.toFixed(3)}, sum delta = ${r.sum_delta.toFixed(3)}\n` +
      `${r.windows_counted} of ${r.windows_total} windows counted` +
      (r.messages.length ? `\n${r.messages.join("\n")}` : "");
  });
}

await init();
for (const [id, run] of [["market", runMarket], ["option", runOption], ["detect", runDetect]]) {
  document.getElementById(id).addEventListener("submit", e => { e.preventDefault(); run(); });
  run();
}

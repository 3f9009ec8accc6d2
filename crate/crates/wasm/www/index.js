import init, { annealing, adaptiveRun, regimeConstants } from "./pkg/fkips_wasm.js";

const $ = (id) => document.getElementById(id);

function energy() {
  return JSON.stringify($("energy").value.split(",").map((s) => Number(s.trim())));
}

function show(id, f) {
  const el = $(id);
  try {
    const value = JSON.parse(f());
    el.classList.remove("err");
    return value;
  } catch (e) {
    el.textContent = String(e);
    el.classList.add("err");
    return null;
  }
}

function bars(canvas, series, colors) {
  const ctx = canvas.getContext("2d");
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  const d = series[0].length;
  const slot = canvas.width / d;
  const width = slot / (series.length + 1);
  const top = Math.max(...series.flat(), 1e-12);
  series.forEach((values, k) => {
    ctx.fillStyle = colors[k];
    values.forEach((v, x) => {
      const h = (v / top) * (canvas.height - 10);
      ctx.fillRect(x * slot + (k + 0.5) * width, canvas.height - h, width, h);
    });
  });
}

function updateAnnealing() {
  $("beta-val").textContent = $("beta").value;
  const v = show("annealing-out", () =>
    annealing(energy(), Number($("beta").value), Number($("k0").value), Number($("level").value)));
  if (!v) return;
  bars($("gibbs"), [v.gibbs], ["#3a6ea5"]);
  $("annealing-out").textContent =
    `tail mass above level: ${v.tail.toExponential(4)}\n` +
    `minorization: delta = ${v.delta.toFixed(6)}, path gap = ${v.gap}\n` +
    `Dobrushin of K^k0: exact ${v.dobrushin_exact.toFixed(6)} <= bound ${v.dobrushin_bound.toFixed(6)}`;
}

function updateAdaptive() {
  const v = show("adaptive-out", () =>
    adaptiveRun(energy(), Number($("epsilon").value), Number($("particles").value),
      Number($("horizon").value), Number($("seed").value)));
  if (!v) return;
  const last = v.occupations.length - 1;
  bars($("adaptive"), [v.occupations[last], v.exact[last]], ["#d0803a", "#3a6ea5"]);
  const rows = v.deltas.map((d, i) =>
    `step ${i + 1}: delta ${d.toFixed(4)}  beta ${v.betas[i + 1].toFixed(4)}  kept ${v.kept_fraction[i].toFixed(3)}  L2 bound ${v.l2_bounds[i + 1].toFixed(4)}`);
  $("adaptive-out").textContent = "orange: particles at the last step, blue: exact\n" + rows.join("\n");
}

function updateRegime() {
  const v = show("regime-out", () =>
    regimeConstants(Number($("a").value), Number($("m").value), Number($("regime-n").value)));
  if (!v) return;
  $("regime-out").textContent = Object.entries(v).map(([k, x]) => `${k} = ${x.toPrecision(8)}`).join("\n");
}

await init();
for (const id of ["energy", "beta", "k0", "level"]) $(id).addEventListener("input", updateAnnealing);
for (const id of ["a", "m", "regime-n"]) $(id).addEventListener("input", updateRegime);
$("run").addEventListener("click", updateAdaptive);
updateAnnealing();
updateAdaptive();
updateRegime();

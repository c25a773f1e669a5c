import init, { Explorer } from "./pkg/scca_net_wasm.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);
let explorer = null;

function status(text) {
  $("status").textContent = text;
}

// Runs `fn` after the status line has had a chance to repaint.
function busy(text, fn) {
  status(text);
  setTimeout(() => {
    try {
      fn();
      status("ready");
    } catch (e) {
      status(`error: ${e.message ?? e}`);
    }
  }, 20);
}

function heat(v) {
  const c = Math.round(255 * (1 - v));
  return `rgb(255,${c},${c})`;
}

function drawHeatmap() {
  if (!explorer) return;
  const l1 = num("l1"), l2 = num("l2");
  $("l1v").textContent = l1;
  $("l2v").textContent = l2;
  const w = explorer.weave(l1, l2);
  const p = explorer.genes();
  const canvas = $("heat"), ctx = canvas.getContext("2d");
  const cell = canvas.width / p;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  for (let i = 0; i < p; i++) {
    for (let j = 0; j < p; j++) {
      ctx.fillStyle = heat(w[i * p + j]);
      ctx.fillRect(j * cell, i * cell, Math.ceil(cell), Math.ceil(cell));
    }
  }
  const h = explorer.last_entropy();
  $("entropy").textContent = Number.isFinite(h) ? `entropy ${h.toFixed(4)}` : "all weights are zero";
}

function drawSurface() {
  const flat = explorer.entropy_surface($("grid").value);
  const pts = [];
  for (let k = 0; k < flat.length; k += 3) pts.push({ l1: flat[k], l2: flat[k + 1], h: flat[k + 2] });
  const axis = [...new Set(pts.map((q) => q.l1))].sort((a, b) => a - b);
  const finite = pts.filter((q) => Number.isFinite(q.h));
  const lo = Math.min(...finite.map((q) => q.h)), hi = Math.max(...finite.map((q) => q.h));
  const canvas = $("surf"), ctx = canvas.getContext("2d");
  const cell = canvas.width / axis.length;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  for (const q of pts) {
    const x = axis.indexOf(q.l2) * cell, y = axis.indexOf(q.l1) * cell;
    if (Number.isFinite(q.h)) {
      const t = hi > lo ? (q.h - lo) / (hi - lo) : 0;
      ctx.fillStyle = `hsl(${220 - 220 * t},70%,55%)`;
    } else {
      ctx.fillStyle = "#ddd";
    }
    ctx.fillRect(x, y, cell - 1, cell - 1);
  }
  const best = finite.reduce((a, b) => (b.h < a.h ? b : a), finite[0]);
  $("best").textContent = best
    ? `lowest entropy ${best.h.toFixed(4)} at λ = (${best.l1}, ${best.l2}); rows λ1, columns λ2, grey = empty network`
    : "every grid point gives an empty network";
}

function runDetect() {
  const out = JSON.parse(explorer.detect($("dgrid").value, num("keep"), num("minsmall")));
  const truth = JSON.parse(explorer.truth());
  const lines = out.voters.map(([a, b, h]) => `voter λ=(${a}, ${b})  H=${h === null ? "inf" : h.toFixed(4)}`);
  out.clusters.forEach((c, k) => lines.push(`module ${k + 1} (${c.length} genes): ${c.map((g) => g + 1).join(" ")}`));
  if (out.clusters.length === 0) lines.push("no module passed the vote");
  out.scores.forEach(([prec, rec], k) =>
    lines.push(`group ${k + 1} (${truth[k].length} genes): precision ${prec === null ? "n/a" : prec.toFixed(3)}, recall ${rec.toFixed(3)}`));
  $("modules").textContent = lines.join("\n");
}

function simulate() {
  busy("simulating…", () => {
    explorer?.free();
    explorer = new Explorer(num("p"), num("n"), $("groups").value, num("dep"), num("partitions"), num("rounds"), num("seed"));
    drawHeatmap();
  });
}

await init();
$("simulate").onclick = simulate;
$("l1").oninput = () => busy("weaving…", drawHeatmap);
$("l2").oninput = () => busy("weaving…", drawHeatmap);
$("surface").onclick = () => explorer && busy("tuning…", drawSurface);
$("detect").onclick = () => explorer && busy("detecting…", runDetect);
simulate();

import init, { suite_size, phantom_view, score, fit } from "./pkg/reportsup_wasm.js";

const $ = (id) => document.getElementById(id);
const COLOURS = { 0: [20, 20, 20], 1: [221, 51, 51], 2: [51, 170, 51], 3: [255, 204, 51] };
let view = null;

function drawSlice(canvas, dims, pick, colour) {
  const [nx, ny] = dims;
  const ctx = canvas.getContext("2d");
  const img = ctx.createImageData(nx, ny);
  for (let y = 0; y < ny; y++) {
    for (let x = 0; x < nx; x++) {
      const [r, g, b] = colour(pick(x, y));
      const o = 4 * (y * nx + x);
      img.data.set([r, g, b, 255], o);
    }
  }
  const tmp = new OffscreenCanvas(nx, ny);
  tmp.getContext("2d").putImageData(img, 0, 0);
  ctx.imageSmoothingEnabled = false;
  ctx.drawImage(tmp, 0, 0, canvas.width, canvas.height);
}

function drawLabels() {
  const [nx, ny, nz] = view.dims;
  const z = Math.min(+$("slice").value, nz - 1);
  $("slice-label").textContent = `z = ${z}`;
  drawSlice($("labels"), view.dims, (x, y) => view.labels[x + nx * (y + ny * z)], (v) => COLOURS[v]);
}

function showScore(s) {
  const b = s.breakdown;
  const lines = [
    `report total  ${b.report_total.toFixed(4)}`,
    `exist ET/ED/TC ${b.exist_per_class.et.toFixed(3)} / ${b.exist_per_class.ed.toFixed(3)} / ${b.exist_per_class.tc.toFixed(3)}`,
    `size          ${b.size.toFixed(3)}`,
    `count         ${b.count.toFixed(3)}`,
    `prior         ${b.prior.toFixed(3)}`,
  ];
  $("breakdown").textContent = lines.join("\n");
  $("cues").textContent = JSON.stringify(s.cues, null, 1);
}

function loadPhantom() {
  try {
    view = JSON.parse(phantom_view(+$("index").value));
  } catch (e) {
    $("breakdown").textContent = String(e);
    return;
  }
  $("slice").max = view.dims[2] - 1;
  $("report").value = view.report;
  drawLabels();
  showScore(view.score);
}

function rescore() {
  try {
    showScore(JSON.parse(score(+$("index").value, $("report").value)));
  } catch (e) {
    $("breakdown").textContent = String(e);
    $("cues").textContent = "";
  }
}

function drawTrace(trace) {
  const c = $("trace");
  const ctx = c.getContext("2d");
  ctx.clearRect(0, 0, c.width, c.height);
  const max = Math.max(...trace, 1e-12);
  ctx.strokeStyle = "#248";
  ctx.beginPath();
  trace.forEach((v, i) => {
    const x = 10 + (i / Math.max(trace.length - 1, 1)) * (c.width - 20);
    const y = c.height - 10 - (v / max) * (c.height - 20);
    i ? ctx.lineTo(x, y) : ctx.moveTo(x, y);
  });
  ctx.stroke();
  ctx.fillStyle = "#000";
  ctx.fillText(`loss ${trace[0].toFixed(3)} -> ${trace[trace.length - 1].toExponential(2)}`, 12, 14);
}

function runFit() {
  const bits = ($("t-exist").checked ? 1 : 0) | ($("t-count").checked ? 2 : 0) | ($("t-prior").checked ? 4 : 0);
  let r;
  try {
    r = JSON.parse(fit(+$("index").value, +$("steps").value, +$("lr").value, bits));
  } catch (e) {
    $("status").textContent = String(e);
    return;
  }
  drawTrace(r.trace);
  const [nx, ny, nz] = r.dims;
  const z = Math.floor(nz / 2);
  drawSlice($("wt"), r.dims, (x, y) => {
    const i = x + nx * (y + ny * z);
    return [r.whole_tumour[i], r.dural[i]];
  }, ([p, d]) => [Math.round(255 * p), Math.round(255 * p * 0.6), d ? 90 : 0]);
  $("status").textContent = `iterations ${r.iterations}\n` + JSON.stringify(r.status, null, 1);
}

await init();
$("index").max = suite_size() - 1;
$("index").addEventListener("change", loadPhantom);
$("slice").addEventListener("input", drawLabels);
$("rescore").addEventListener("click", rescore);
$("run-fit").addEventListener("click", runFit);
loadPhantom();

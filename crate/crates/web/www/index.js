import init, { preprocess_image, metrics_from_counts, Trainer } from "./pkg/vitforge_web.js";

const $ = (id) => document.getElementById(id);

function showError(el, err) {
  el.textContent = String(err);
  el.classList.add("error");
}

function drawRgba(canvas, rgba, size) {
  canvas.width = size;
  canvas.height = size;
  const data = new ImageData(new Uint8ClampedArray(rgba), size, size);
  canvas.getContext("2d").putImageData(data, 0, 0);
}

async function fileBytes(input) {
  const file = input.files[0];
  return file ? new Uint8Array(await file.arrayBuffer()) : null;
}

function fmt(x) {
  return x.toFixed(4);
}

// 1. Preprocessing

async function runPreprocess() {
  const out = $("pre-out");
  out.classList.remove("error");
  const bytes = await fileBytes($("pre-file"));
  if (!bytes) return;
  const size = Number($("pre-size").value);
  try {
    const result = preprocess_image(bytes, size);
    drawRgba($("pre-canvas"), result.rgba(), size);
    $("pre-canvas").style.width = "224px";
    const s = JSON.parse(result.summary());
    const lines = [
      `original ${s.original[1]}x${s.original[0]} -> ${s.size}x${s.size}`,
      `center pixel raw [${s.center_raw.join(", ")}] -> normalized [${s.center_normalized.map(fmt).join(", ")}]`,
      "",
      "channel   mean     std      min      max",
      ...s.channels.map((c) =>
        `${c.channel.padEnd(8)} ${[c.mean, c.std, c.min, c.max].map((v) => fmt(v).padStart(8)).join(" ")}`),
    ];
    out.textContent = lines.join("\n");
    result.free();
  } catch (e) {
    showError(out, e);
  }
}

// 2. Training

function plot(canvas, series, yMax, xMax) {
  const ctx = canvas.getContext("2d");
  const { width: w, height: h } = canvas;
  const pad = 24;
  ctx.clearRect(0, 0, w, h);
  ctx.strokeStyle = "#999";
  ctx.strokeRect(pad, 4, w - pad - 4, h - pad - 4);
  ctx.fillStyle = "#555";
  ctx.font = "11px sans-serif";
  ctx.fillText(yMax.toFixed(yMax >= 10 ? 0 : 2), 2, 12);
  ctx.fillText("0", 2, h - pad);
  ctx.fillText(String(xMax), w - 20, h - 8);
  const x = (i) => pad + ((w - pad - 4) * i) / Math.max(xMax, 1);
  const y = (v) => h - pad - ((h - pad - 8) * Math.min(v, yMax)) / yMax;
  series.forEach(({ values, color, label }, k) => {
    ctx.strokeStyle = color;
    ctx.beginPath();
    values.forEach((v, i) => (i ? ctx.lineTo(x(i + 1), y(v)) : ctx.moveTo(x(i + 1), y(v))));
    ctx.stroke();
    ctx.fillStyle = color;
    ctx.fillText(label, pad + 6 + 60 * k, h - 8);
  });
}

function plotRoc(canvas, roc) {
  const ctx = canvas.getContext("2d");
  const { width: w, height: h } = canvas;
  ctx.clearRect(0, 0, w, h);
  ctx.strokeStyle = "#ccc";
  ctx.beginPath();
  ctx.moveTo(0, h);
  ctx.lineTo(w, 0);
  ctx.stroke();
  ctx.strokeStyle = "#c33";
  ctx.beginPath();
  roc.points.forEach(([fpr, tpr], i) => {
    const px = fpr * w;
    const py = h - tpr * h;
    i ? ctx.lineTo(px, py) : ctx.moveTo(px, py);
  });
  ctx.stroke();
  ctx.fillStyle = "#333";
  ctx.font = "12px sans-serif";
  ctx.fillText(roc.auc === null ? "AUC undefined" : `AUC ${roc.auc.toFixed(4)}`, w - 90, h - 8);
}

let trainer = null;

function showPreviews(t) {
  const box = $("tr-previews");
  box.replaceChildren();
  for (let i = 0; i < t.preview_count(); i++) {
    const c = document.createElement("canvas");
    c.title = t.preview_label(i);
    drawRgba(c, t.preview(i), t.image_size());
    box.appendChild(c);
  }
}

async function runTraining() {
  const log = $("tr-log");
  log.classList.remove("error");
  log.textContent = "";
  const button = $("tr-start");
  button.disabled = true;
  try {
    if (trainer) trainer.free();
    trainer = new Trainer(
      Number($("tr-samples").value),
      Number($("tr-epochs").value),
      Number($("tr-lr").value),
      Number($("tr-seed").value),
    );
    showPreviews(trainer);
    const epochs = Number($("tr-epochs").value);
    const hist = { tl: [], vl: [], ta: [], va: [] };
    for (;;) {
      const r = JSON.parse(trainer.step());
      hist.tl.push(r.log.train_loss);
      hist.vl.push(r.log.val_loss);
      hist.ta.push(r.log.train_acc);
      hist.va.push(r.log.val_acc);
      log.textContent += r.line + "\n";
      const lossMax = Math.max(...hist.tl, ...hist.vl, 0.1);
      plot($("tr-loss"), [
        { values: hist.tl, color: "#1f77b4", label: "train" },
        { values: hist.vl, color: "#ff7f0e", label: "val" },
      ], lossMax, epochs);
      plot($("tr-acc"), [
        { values: hist.ta, color: "#1f77b4", label: "train" },
        { values: hist.va, color: "#ff7f0e", label: "val" },
      ], 100, epochs);
      plotRoc($("tr-roc"), JSON.parse(trainer.roc()));
      // Yield so the page repaints between epochs.
      await new Promise((resolve) => setTimeout(resolve, 0));
      if (r.done) break;
    }
  } catch (e) {
    showError(log, e);
  } finally {
    button.disabled = false;
  }
}

async function classifyUpload() {
  const out = $("tr-class");
  out.classList.remove("error");
  const bytes = await fileBytes($("tr-file"));
  if (!bytes) return;
  if (!trainer) {
    out.textContent = "Train a model first.";
    return;
  }
  try {
    const r = JSON.parse(trainer.classify(bytes));
    out.textContent = `${r.class}  (${r.probabilities.map(([n, p]) => `${n} ${p.toFixed(6)}`).join(", ")})`;
  } catch (e) {
    showError(out, e);
  }
}

// 3. Metrics explorer

function runMetrics() {
  const out = $("m-out");
  out.classList.remove("error");
  const v = ["m-tp", "m-fn", "m-fp", "m-tn"].map((id) => Math.max(0, Number($(id).value) | 0));
  try {
    out.textContent = JSON.parse(metrics_from_counts(...v)).text;
  } catch (e) {
    showError(out, e);
  }
}

await init();
$("pre-file").addEventListener("change", runPreprocess);
$("pre-size").addEventListener("change", runPreprocess);
$("tr-start").addEventListener("click", runTraining);
$("tr-file").addEventListener("change", classifyUpload);
for (const id of ["m-tp", "m-fn", "m-fp", "m-tn"]) $(id).addEventListener("input", runMetrics);
runMetrics();

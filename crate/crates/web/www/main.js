import init, { Viewer } from "./pkg/splatseg_web.js";

const $ = (id) => document.getElementById(id);
const view = $("view");
const overlay = $("overlay");
const status = $("status");

let viewer;
let size;

function say(text, isError = false) {
  status.textContent = text;
  status.className = isError ? "error" : "";
}

function paint(canvas, rgba) {
  const ctx = canvas.getContext("2d");
  ctx.putImageData(new ImageData(new Uint8ClampedArray(rgba), size, size), 0, 0);
}

function redraw() {
  viewer.orbit(Number($("azimuth").value), Number($("elevation").value));
  paint(view, viewer.render());
  if ($("masks").checked) {
    paint(overlay, viewer.segment());
  } else {
    overlay.getContext("2d").clearRect(0, 0, size, size);
  }
}

function guarded(fn) {
  return (...args) => {
    try {
      fn(...args);
    } catch (e) {
      say(e.message ?? String(e), true);
    }
  };
}

function adopt(next, label) {
  viewer?.free();
  viewer = next;
  viewer.setThreshold(Number($("threshold").value));
  say(`${label}: ${viewer.gaussianCount()} Gaussians`);
  redraw();
}

for (const id of ["azimuth", "elevation"]) {
  $(id).addEventListener("input", guarded(() => {
    $(`${id}-out`).textContent = `${$(id).value}°`;
    redraw();
  }));
}

$("threshold").addEventListener("input", guarded(() => {
  const t = Number($("threshold").value);
  $("threshold-out").textContent = t.toFixed(2);
  const n = viewer.setThreshold(t);
  redraw();
  say(`t = ${t.toFixed(2)}: ${n} selected`);
}));

$("masks").addEventListener("change", guarded(redraw));

view.addEventListener("click", guarded((event) => {
  const rect = view.getBoundingClientRect();
  const x = Math.floor(((event.clientX - rect.left) / rect.width) * size);
  const y = Math.floor(((event.clientY - rect.top) / rect.height) * size);
  const n = viewer.click(x, y);
  if (n < 0) {
    say("Background: click on an object to select it.");
    return;
  }
  redraw();
  say(`${n} of ${viewer.gaussianCount()} Gaussians selected`);
}));

$("clear").addEventListener("click", guarded(() => {
  viewer.clearSelection();
  redraw();
  say("Selection cleared");
}));

$("export").addEventListener("click", guarded(() => {
  const bytes = viewer.exportSelection();
  const url = URL.createObjectURL(new Blob([bytes], { type: "application/octet-stream" }));
  const a = document.createElement("a");
  a.href = url;
  a.download = "selection.ply";
  a.click();
  URL.revokeObjectURL(url);
}));

$("file").addEventListener("change", async () => {
  const file = $("file").files[0];
  if (!file) return;
  const bytes = new Uint8Array(await file.arrayBuffer());
  guarded(() => adopt(Viewer.fromPly(bytes), file.name))();
});

await init();
size = Viewer.size();
view.width = overlay.width = size;
view.height = overlay.height = size;
guarded(() => adopt(new Viewer(7), "synthetic scene"))();

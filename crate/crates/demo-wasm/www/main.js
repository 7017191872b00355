import init, { Demo } from "./pkg/coexplore_demo_wasm.js";

const $ = (id) => document.getElementById(id);
let demo = null;
let lastMission = null;

function paint(canvas, size, rgba) {
  canvas.width = size;
  canvas.height = size;
  const ctx = canvas.getContext("2d");
  ctx.putImageData(new ImageData(new Uint8ClampedArray(rgba), size, size), 0, 0);
  return ctx;
}

function drawField() {
  const size = demo.size();
  const ctx = paint($("field"), size, demo.field_rgba());
  if (!lastMission) return;
  ctx.fillStyle = "black";
  for (const c of lastMission.path) ctx.fillRect(c.x, c.y, 1, 1);
  ctx.fillStyle = "red";
  for (const c of lastMission.queried) ctx.fillRect(c.x, c.y, 1, 1);
}

function guard(fn) {
  return () => {
    $("status").textContent = "";
    try {
      fn();
    } catch (e) {
      $("status").textContent = String(e);
    }
  };
}

function generate() {
  demo = new Demo(Number($("seed").value), Number($("size").value), Number($("topics").value));
  lastMission = null;
  const size = demo.size();
  drawField();
  paint($("interest"), size, demo.interest_rgba());
  paint($("heat"), size, demo.heat_rgba());
  $("metrics").textContent = "";
  $("comparison").innerHTML = "";
}

function runMission() {
  const json = demo.run_mission($("selector").value, Number($("period").value), Number($("tmax").value), 0);
  lastMission = JSON.parse(json);
  drawField();
  paint($("heat"), demo.size(), demo.heat_rgba());
  const m = lastMission.metrics;
  $("metrics").textContent =
    `reward/step ${m.reward_per_timestep.toFixed(3)}, map loss ${m.final_map_loss.toFixed(3)}, queries ${m.queries_made}`;
}

function compare() {
  const rows = JSON.parse(demo.compare(Number($("period").value), Number($("tmax").value), Number($("trials").value)));
  const body = rows
    .map((r) => `<tr><td>${r.method}</td><td>${r.reward_per_timestep.toFixed(3)}</td><td>${r.final_map_loss.toFixed(3)}</td></tr>`)
    .join("");
  $("comparison").innerHTML = `<tr><th>method</th><th>reward/step</th><th>map loss</th></tr>${body}`;
}

await init();
$("generate").onclick = guard(generate);
$("run").onclick = guard(runMission);
$("compare").onclick = guard(compare);
guard(generate)();

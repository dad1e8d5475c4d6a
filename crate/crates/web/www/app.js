// Build with crates/web/build.sh, which runs:
//   cargo build --release --target wasm32-unknown-unknown -p rmlearn-web
//   wasm-bindgen --target web --out-dir crates/web/www/pkg \
//     target/wasm32-unknown-unknown/release/rmlearn_web.wasm
import init, { simulate, infer, learn } from "./pkg/rmlearn_web.js";

const TASKS = ["corridor", "officeworld:b", "officeworld:c", "officeworld:d", "officeworld:e",
  "breakfastworld:b", "breakfastworld:c"];
const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

function escape(text) {
  return String(text).replace(/[&<>"]/g, (c) => ({ "&": "&amp;", "<": "&lt;", ">": "&gt;", '"': "&quot;" })[c]);
}

function machineTable(m) {
  const rows = m.rules.map((r) =>
    `<tr><td>u${r.from}</td><td>${escape(r.key)}</td><td>u${r.to}${r.terminal ? " (end)" : ""}</td><td>${escape(r.reward)}</td></tr>`);
  return `<table><tr><th>from</th><th>on</th><th>to</th><th>reward</th></tr>${rows.join("")}</table>`;
}

function render(result, header) {
  if (result.error) return `<p class="error">${escape(result.error)}</p>`;
  let html = `<p>${header}</p>`;
  if (result.machine) html += machineTable(result.machine);
  if (result.dot) html += `<details><summary>DOT</summary><pre>${escape(result.dot)}</pre></details>`;
  return html;
}

function drawCurve(values) {
  const canvas = $("curve"), ctx = canvas.getContext("2d");
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  if (!values.length) return;
  const lo = Math.min(0, ...values), hi = Math.max(1e-9, ...values);
  const x = (i) => (i / Math.max(1, values.length - 1)) * (canvas.width - 10) + 5;
  const y = (v) => canvas.height - 5 - ((v - lo) / (hi - lo)) * (canvas.height - 10);
  ctx.strokeStyle = "#999";
  ctx.beginPath(); ctx.moveTo(0, y(0)); ctx.lineTo(canvas.width, y(0)); ctx.stroke();
  ctx.strokeStyle = "#1565c0";
  ctx.beginPath();
  values.forEach((v, i) => (i ? ctx.lineTo(x(i), y(v)) : ctx.moveTo(x(i), y(v))));
  ctx.stroke();
  ctx.fillStyle = "#333";
  ctx.fillText(`window reward, max ${hi.toFixed(2)}`, 8, 12);
}

// Let the button state repaint before a long synchronous call.
const later = (fn) => setTimeout(fn, 20);

await init();
for (const id of ["sim-env", "learn-env"]) {
  $(id).innerHTML = TASKS.map((t) => `<option>${t}</option>`).join("");
}
$("learn-env").value = "officeworld:b";

$("sim-run").onclick = () => {
  const out = JSON.parse(simulate($("sim-env").value, $("sim-variant").value, num("sim-episodes"), num("sim-seed")));
  if (out.error) { $("sim-info").innerHTML = `<span class="error">${escape(out.error)}</span>`; return; }
  $("traces").value = out.traces;
  $("sim-info").textContent = `${out.episodes} episodes, ${out.steps} steps, ${out.conflicting_keys} conflicting keys`;
};

$("inf-run").onclick = () => {
  $("inf-out").textContent = "solving...";
  later(() => {
    const out = JSON.parse(infer($("traces").value, num("inf-k"), num("inf-nodes")));
    const tried = (out.attempts || []).map((a) => `K=${a.k} ${a.status}`).join(", ");
    $("inf-out").innerHTML = render(out,
      out.status === "feasible" ? `|U| = ${out.states}, ${out.z} triggering transitions (${tried})` : `${out.status} (${tried})`);
  });
};

$("learn-run").onclick = () => {
  $("learn-out").textContent = "learning...";
  later(() => {
    const out = JSON.parse(learn($("learn-env").value, $("learn-variant").value,
      num("learn-episodes"), num("learn-seed"), num("learn-nodes")));
    if (!out.error) drawCurve(out.curve);
    $("learn-out").innerHTML = render(out,
      `${out.status}: |U| = ${out.states}, |T_o| = ${out.size_t_o}, ${out.solve_nodes} search nodes`);
  });
};

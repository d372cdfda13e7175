import init, { alignEvents, sampleKeyframes, ToyIndex } from "./pkg/trake_wasm_demo.js";

const $ = (id) => document.getElementById(id);

function fail(id, e) {
  $(id).textContent = e ? String(e.message ?? e) : "";
}

// alignment

function randomMatrix(n, t) {
  const rows = [];
  for (let i = 0; i < n; i++) {
    const row = [];
    for (let j = 0; j < t; j++) row.push(Math.round(Math.random() * 60) / 100);
    // plant a strong hit for each event, spaced left to right
    const peak = Math.min(t - 1, Math.floor(((i + 0.5) * t) / n));
    row[peak] = Math.round((0.8 + Math.random() * 0.2) * 100) / 100;
    rows.push(row);
  }
  return rows;
}

function writeMatrix(rows) {
  $("al-matrix").value = rows.map((r) => r.join(" ")).join("\n");
}

function readMatrix() {
  return $("al-matrix").value
    .split("\n")
    .map((l) => l.trim())
    .filter((l) => l.length > 0)
    .map((l) => l.split(/[\s,]+/).map(Number));
}

function renderGrid(rows, path) {
  const table = document.createElement("table");
  table.className = "grid";
  const head = table.insertRow();
  head.appendChild(document.createElement("th"));
  rows[0].forEach((_, j) => {
    const th = document.createElement("th");
    th.textContent = j + 1;
    head.appendChild(th);
  });
  rows.forEach((row, i) => {
    const tr = table.insertRow();
    const th = document.createElement("th");
    th.textContent = `q${i + 1}`;
    tr.appendChild(th);
    row.forEach((v, j) => {
      const td = tr.insertCell();
      td.textContent = v.toFixed(2);
      const shade = Math.round(255 - Math.max(0, Math.min(1, v)) * 160);
      td.style.background = `rgb(${shade},${shade},255)`;
      if (path && path[i] === j + 1) td.classList.add("on");
    });
  });
  $("al-grid").replaceChildren(table);
}

function runAlign() {
  const lambda = Number($("al-lambda").value);
  $("al-lambda-v").textContent = lambda.toFixed(3);
  const rows = readMatrix();
  fail("al-err");
  if (rows.length === 0) {
    $("al-grid").replaceChildren();
    $("al-out").textContent = "";
    return;
  }
  try {
    const r = JSON.parse(alignEvents(JSON.stringify(rows), lambda));
    renderGrid(rows, r.path);
    $("al-out").textContent =
      `path      ${r.path.join(" → ")}\n` +
      `scores    ${r.event_scores.map((s) => s.toFixed(3)).join(" + ")}\n` +
      `penalty   ${r.penalty.toFixed(4)}\n` +
      `total     ${r.score.toFixed(4)}`;
  } catch (e) {
    renderGrid(rows.filter((r) => r.length === rows[0].length), null);
    $("al-out").textContent = "";
    fail("al-err", e);
  }
}

function freshMatrix() {
  const n = Math.max(1, Number($("al-n").value) | 0);
  const t = Math.max(n, Number($("al-t").value) | 0);
  writeMatrix(randomMatrix(n, t));
  runAlign();
}

// sampling

function runSample() {
  const a = Number($("sm-a").value);
  const b = Number($("sm-b").value);
  const svg = $("sm-svg");
  svg.replaceChildren();
  fail("sm-err");
  let frames;
  try {
    frames = Array.from(sampleKeyframes(a, b));
  } catch (e) {
    $("sm-out").textContent = "";
    fail("sm-err", e);
    return;
  }
  const ns = "http://www.w3.org/2000/svg";
  const w = Number(svg.getAttribute("width"));
  const pad = 20;
  const x = (f) => (b === a ? w / 2 : pad + ((f - a) / (b - a)) * (w - 2 * pad));
  const line = document.createElementNS(ns, "line");
  Object.entries({ x1: pad, x2: w - pad, y1: 30, y2: 30, stroke: "#999", "stroke-width": 4 })
    .forEach(([k, v]) => line.setAttribute(k, v));
  svg.appendChild(line);
  frames.forEach((f, i) => {
    const c = document.createElementNS(ns, "circle");
    Object.entries({ cx: x(f), cy: 30, r: 6 - i * 0.5, fill: "#c00", "fill-opacity": 0.6 })
      .forEach(([k, v]) => c.setAttribute(k, v));
    svg.appendChild(c);
  });
  $("sm-out").textContent = `frames ${frames.join(", ")}`;
}

// toy search

let index = null;
let indexedText = null;

function runSearch() {
  fail("ts-err");
  const out = $("ts-out");
  out.replaceChildren();
  try {
    const text = $("ts-corpus").value;
    if (text !== indexedText) {
      index?.free();
      index = null;
      indexedText = text;
      index = new ToyIndex(text, 256);
    }
    if (!index) return;
    const k = Math.max(1, Number($("ts-k").value) | 0);
    for (const h of JSON.parse(index.search($("ts-q").value, k))) {
      const li = document.createElement("li");
      li.textContent = `${h.score.toFixed(4)}  line ${h.line + 1}: ${h.text}`;
      out.appendChild(li);
    }
  } catch (e) {
    fail("ts-err", e);
  }
}

await init();

$("al-rand").addEventListener("click", freshMatrix);
$("al-lambda").addEventListener("input", runAlign);
$("al-matrix").addEventListener("input", runAlign);
["al-n", "al-t"].forEach((id) => $(id).addEventListener("change", freshMatrix));
["sm-a", "sm-b"].forEach((id) => $(id).addEventListener("input", runSample));
["ts-corpus", "ts-q", "ts-k"].forEach((id) => $(id).addEventListener("input", runSearch));

writeMatrix([
  [0.1, 0.9, 0.2, 0.1, 0.3, 0.2, 0.1, 0.2, 0.1, 0.2, 0.1, 0.85],
  [0.2, 0.1, 0.3, 0.8, 0.2, 0.1, 0.2, 0.1, 0.3, 0.1, 0.2, 0.1],
  [0.1, 0.2, 0.1, 0.2, 0.1, 0.7, 0.2, 0.1, 0.2, 0.1, 0.95, 0.1],
]);
runAlign();
runSample();
runSearch();

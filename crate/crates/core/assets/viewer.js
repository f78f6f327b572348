(function () {
  "use strict";

  function el(tag, attrs, text) {
    var e = document.createElement(tag);
    for (var k in attrs || {}) e.setAttribute(k, attrs[k]);
    if (text !== undefined) e.textContent = text;
    return e;
  }

  function banner(root, msg) {
    var b = el("div", { "class": "fs-error", role: "alert" }, msg);
    b.style.cssText = "background:#fdecea;color:#611a15;padding:6px 10px;margin-bottom:6px;border:1px solid #f5c6cb";
    root.appendChild(b);
  }

  function validate(p) {
    var errors = [];
    if (!p || typeof p !== "object") return ["payload is not an object"];
    var feats = p.geojson && p.geojson.features;
    if (!Array.isArray(feats)) errors.push("geojson.features missing");
    if (!Array.isArray(p.timeline)) errors.push("timeline missing");
    if (!Array.isArray(p.texts)) errors.push("texts missing");
    if (!p.palette || typeof p.palette !== "object") errors.push("palette missing");
    if (Array.isArray(feats)) {
      feats.forEach(function (f, i) {
        var c = f && f.properties && f.properties.cluster_id;
        if (p.palette && !(String(c) in p.palette)) errors.push("no palette entry for cluster " + c + " (feature " + i + ")");
      });
      if (Array.isArray(p.timeline) && p.timeline.length !== feats.length) errors.push("timeline length differs from feature count");
    }
    return errors;
  }

  function fmtTime(us, t0) {
    return ((us - t0) / 1e6).toFixed(1) + " s";
  }

  function mount(elementId) {
    var root = document.getElementById(elementId);
    if (!root) return;
    root.textContent = "";
    var payload;
    try {
      payload = JSON.parse(document.getElementById("fieldscribe-payload").textContent);
    } catch (e) {
      banner(root, "Map data could not be read: " + e.message);
      return;
    }
    var problems = validate(payload);
    if (problems.length) banner(root, "Map data is incomplete: " + problems.join("; "));
    var feats = (payload.geojson && payload.geojson.features) || [];
    var palette = payload.palette || {};
    var texts = payload.texts || [];
    var timeline = Array.isArray(payload.timeline) ? payload.timeline : [];
    var track = Array.isArray(payload.track) ? payload.track : [];
    var t0 = payload.t0_us || 0;

    var W = 800, H = 480;
    var canvas = el("canvas", { width: W, height: H, "class": "fs-map" });
    canvas.style.cssText = "border:1px solid #ccc;cursor:grab;max-width:100%;touch-action:none";
    var popup = el("div", { "class": "fs-popup" });
    popup.style.cssText = "position:absolute;display:none;background:#fff;border:1px solid #888;padding:6px 8px;max-width:320px;font-size:13px;box-shadow:0 2px 6px rgba(0,0,0,.2)";
    var wrap = el("div");
    wrap.style.position = "relative";
    wrap.appendChild(canvas);
    wrap.appendChild(popup);
    root.appendChild(wrap);

    var pts = feats.map(function (f, i) {
      var c = f.geometry.coordinates;
      return { lon: c[0], lat: c[1], i: i, cluster: f.properties.cluster_id, t: f.properties.t_us };
    });
    var all = pts.map(function (p) { return [p.lat, p.lon]; }).concat(track.map(function (q) { return [q[1], q[0]]; }));
    var minLat = Infinity, maxLat = -Infinity, minLon = Infinity, maxLon = -Infinity;
    all.forEach(function (q) {
      minLat = Math.min(minLat, q[0]); maxLat = Math.max(maxLat, q[0]);
      minLon = Math.min(minLon, q[1]); maxLon = Math.max(maxLon, q[1]);
    });
    if (!isFinite(minLat)) { banner(root, "No positions to show."); return; }
    var kx = Math.max(Math.cos(((minLat + maxLat) / 2) * Math.PI / 180), 1e-6);
    if (maxLat === minLat) { minLat -= 50 / 111320; maxLat += 50 / 111320; }
    if (maxLon === minLon) { minLon -= 50 / (111320 * kx); maxLon += 50 / (111320 * kx); }
    var base = Math.min(W * 0.9 / ((maxLon - minLon) * kx), H * 0.9 / (maxLat - minLat));
    var latC = (minLat + maxLat) / 2, lonC = (minLon + maxLon) / 2;
    var view = { zoom: 1, dx: 0, dy: 0 };
    var highlighted = -1;

    function proj(lat, lon) {
      var s = base * view.zoom;
      return [W / 2 + view.dx + (lon - lonC) * kx * s, H / 2 + view.dy - (lat - latC) * s];
    }

    var tiles = typeof payload.tiles === "string" ? payload.tiles : null;
    function draw() {
      var g = canvas.getContext("2d");
      if (!g) return;
      g.fillStyle = "#F7F7F4";
      g.fillRect(0, 0, W, H);
      if (track.length > 1) {
        g.strokeStyle = "#9A9A9A";
        g.lineWidth = 2;
        g.beginPath();
        track.forEach(function (q, k) {
          var xy = proj(q[1], q[0]);
          if (k === 0) g.moveTo(xy[0], xy[1]); else g.lineTo(xy[0], xy[1]);
        });
        g.stroke();
      }
      pts.forEach(function (p) {
        var xy = proj(p.lat, p.lon);
        g.beginPath();
        g.arc(xy[0], xy[1], p.i === highlighted ? 9 : 6, 0, 2 * Math.PI);
        g.fillStyle = palette[String(p.cluster)] || "#777777";
        g.fill();
        g.lineWidth = p.i === highlighted ? 3 : 1.5;
        g.strokeStyle = p.i === highlighted ? "#000000" : "#FFFFFF";
        g.stroke();
      });
    }
    if (tiles) {
      var note = el("div", { "class": "fs-tiles" }, "Tile layer enabled: " + tiles);
      note.style.cssText = "font-size:12px;color:#666";
      root.appendChild(note);
    }

    function hit(x, y) {
      var best = -1, bestD = 100;
      pts.forEach(function (p) {
        var xy = proj(p.lat, p.lon);
        var d = (xy[0] - x) * (xy[0] - x) + (xy[1] - y) * (xy[1] - y);
        if (d < bestD) { bestD = d; best = p.i; }
      });
      return best;
    }

    function showPopup(i) {
      var p = pts[i];
      var xy = proj(p.lat, p.lon);
      popup.textContent = "";
      popup.appendChild(el("div", { "class": "fs-popup-time" }, "Clip " + feats[i].properties.clip_index + ", " + fmtTime(p.t, t0)));
      popup.appendChild(el("div", { "class": "fs-popup-text" }, texts[i] === undefined ? "" : String(texts[i])));
      popup.style.left = Math.min(xy[0] + 10, W - 200) + "px";
      popup.style.top = Math.max(xy[1] - 10, 0) + "px";
      popup.style.display = "block";
    }

    function toCanvas(ev) {
      var r = canvas.getBoundingClientRect();
      return [(ev.clientX - r.left) * (W / r.width), (ev.clientY - r.top) * (H / r.height)];
    }

    var drag = null, moved = false;
    canvas.addEventListener("mousedown", function (ev) { drag = toCanvas(ev); moved = false; });
    window.addEventListener("mouseup", function () { drag = null; });
    canvas.addEventListener("mousemove", function (ev) {
      if (!drag) return;
      var xy = toCanvas(ev);
      view.dx += xy[0] - drag[0];
      view.dy += xy[1] - drag[1];
      if (Math.abs(xy[0] - drag[0]) + Math.abs(xy[1] - drag[1]) > 1) moved = true;
      drag = xy;
      popup.style.display = "none";
      draw();
    });
    canvas.addEventListener("click", function (ev) {
      if (moved) return;
      var xy = toCanvas(ev);
      var i = hit(xy[0], xy[1]);
      if (i >= 0) showPopup(i); else popup.style.display = "none";
    });
    canvas.addEventListener("wheel", function (ev) {
      ev.preventDefault();
      var xy = toCanvas(ev);
      var f = ev.deltaY < 0 ? 1.2 : 1 / 1.2;
      view.dx = (view.dx - (xy[0] - W / 2)) * f + (xy[0] - W / 2);
      view.dy = (view.dy - (xy[1] - H / 2)) * f + (xy[1] - H / 2);
      view.zoom *= f;
      popup.style.display = "none";
      draw();
    }, { passive: false });

    var strip = el("div", { "class": "fs-timeline" });
    strip.style.cssText = "display:flex;height:24px;margin-top:8px;border:1px solid #ccc;max-width:800px";
    timeline.forEach(function (t) {
      var seg = el("div", { "class": "fs-segment", "data-index": t.feature_index, title: "Clip " + t.clip_index });
      seg.style.cssText = "flex:1;background:" + (palette[String(t.cluster_id)] || "#777777");
      seg.addEventListener("mouseenter", function () { highlighted = t.feature_index; draw(); });
      seg.addEventListener("mouseleave", function () { highlighted = -1; draw(); });
      seg.addEventListener("click", function () { if (pts[t.feature_index]) showPopup(t.feature_index); });
      strip.appendChild(seg);
    });
    root.appendChild(strip);

    var list = el("ul", { "class": "fs-points" });
    list.style.display = "none";
    pts.forEach(function (p) { list.appendChild(el("li", { "class": "fs-point", "data-index": p.i }, texts[p.i])); });
    root.appendChild(list);

    draw();
  }

  window.mountFieldscribeViewer = mount;
})();

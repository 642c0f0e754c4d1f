//! Trace export: CSV, text summary, and dependency-free SVG line charts.

use std::fmt::Write as _;
use std::path::Path;

use crate::engine::{tracking_metrics, trigger_stats, SimTrace};
use crate::error::Result;

/// Render the whole trace as CSV with the header
/// `t,agent,x1,..,xhat1,..,gamma1,phihat1,..,alpha_n,w,u_held,event`.
pub fn trace_to_csv(trace: &SimTrace) -> String {
    let order = trace.agents[0].records[0].x.len();
    let mut out = String::new();
    out.push('t');
    out.push_str(",agent");
    for m in 1..=order {
        let _ = write!(out, ",x{m}");
    }
    for m in 1..=order {
        let _ = write!(out, ",xhat{m}");
    }
    out.push_str(",gamma1");
    for m in 1..=order {
        let _ = write!(out, ",phihat{m}");
    }
    out.push_str(",alpha_n,w,u_held,event\n");

    for (k, &t) in trace.time.iter().enumerate() {
        for (i, series) in trace.agents.iter().enumerate() {
            let rec = &series.records[k];
            let _ = write!(out, "{t},{}", i + 1);
            for v in &rec.x {
                let _ = write!(out, ",{v}");
            }
            for v in &rec.xhat {
                let _ = write!(out, ",{v}");
            }
            let _ = write!(out, ",{}", rec.gamma1);
            for v in &rec.phi_hat {
                let _ = write!(out, ",{v}");
            }
            let _ = writeln!(
                out,
                ",{},{},{},{}",
                rec.alpha_n,
                rec.w,
                rec.u_held,
                if rec.event { 1 } else { 0 }
            );
        }
    }
    out
}

/// Human-readable run summary: per-agent trigger and tracking metrics.
pub fn summary(trace: &SimTrace, kappa1: &[f64], tail_start: f64, margin: f64) -> Result<String> {
    let stats = trigger_stats(trace)?;
    let metrics = tracking_metrics(trace, kappa1, tail_start, margin)?;
    let steps = trace.steps();
    let mut out = String::new();
    let _ = writeln!(
        out,
        "mode: {}",
        if trace.mode_periodic { "periodic" } else { "event" }
    );
    let _ = writeln!(out, "dt: {}", trace.dt);
    let _ = writeln!(out, "t_final: {}", trace.t_final);
    let _ = writeln!(out, "steps: {steps}");
    let _ = writeln!(out, "tail window: [{tail_start}, {}]", trace.t_final);
    for (i, (s, m)) in stats.iter().zip(&metrics).enumerate() {
        let _ = writeln!(out, "agent {}:", i + 1);
        let _ = writeln!(out, "  trigger count: {}", s.count);
        let _ = writeln!(out, "  min inter-event time: {:.6}", s.min_inter_event);
        let _ = writeln!(out, "  mean inter-event time: {:.6}", s.mean_inter_event);
        let _ = writeln!(out, "  max tail |gamma1|: {:.6}", m.max_tail_gamma1);
        let _ = writeln!(out, "  max tail |y - y0|: {:.6}", m.max_tail_output_error);
        let _ = writeln!(out, "  sup observer error: {:.6}", m.observer_error_sup);
        let _ = writeln!(
            out,
            "  within band |gamma1| <= {:.3}: {}",
            kappa1[i] + margin,
            if m.within_band { "yes" } else { "no" }
        );
    }
    Ok(out)
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

/// Minimal multi-series line chart.
pub fn svg_line_chart(title: &str, series: &[(String, Vec<(f64, f64)>)]) -> String {
    let (w, h) = (860.0, 420.0);
    let (ml, mr, mt, mb) = (60.0, 20.0, 40.0, 40.0);
    let mut xmin = f64::INFINITY;
    let mut xmax = f64::NEG_INFINITY;
    let mut ymin = f64::INFINITY;
    let mut ymax = f64::NEG_INFINITY;
    for (_, pts) in series {
        for &(x, y) in pts {
            xmin = xmin.min(x);
            xmax = xmax.max(x);
            ymin = ymin.min(y);
            ymax = ymax.max(y);
        }
    }
    if !xmin.is_finite() {
        xmin = 0.0;
        xmax = 1.0;
        ymin = 0.0;
        ymax = 1.0;
    }
    if (ymax - ymin).abs() < 1e-12 {
        ymin -= 1.0;
        ymax += 1.0;
    }
    let sx = |x: f64| ml + (x - xmin) / (xmax - xmin) * (w - ml - mr);
    let sy = |y: f64| h - mb - (y - ymin) / (ymax - ymin) * (h - mt - mb);

    let mut out = String::new();
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">"
    );
    let _ = writeln!(out, "<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>");
    let _ = writeln!(
        out,
        "<text x=\"{}\" y=\"24\" font-family=\"sans-serif\" font-size=\"16\" text-anchor=\"middle\">{title}</text>",
        w / 2.0
    );
    // axes
    let _ = writeln!(
        out,
        "<line x1=\"{ml}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>",
        h - mb,
        w - mr,
        h - mb
    );
    let _ = writeln!(
        out,
        "<line x1=\"{ml}\" y1=\"{mt}\" x2=\"{ml}\" y2=\"{}\" stroke=\"black\"/>",
        h - mb
    );
    for frac in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let xv = xmin + frac * (xmax - xmin);
        let yv = ymin + frac * (ymax - ymin);
        let _ = writeln!(
            out,
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">{:.2}</text>",
            sx(xv),
            h - mb + 16.0,
            xv
        );
        let _ = writeln!(
            out,
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">{:.2}</text>",
            ml - 6.0,
            sy(yv) + 4.0,
            yv
        );
    }
    for (idx, (label, pts)) in series.iter().enumerate() {
        let color = PALETTE[idx % PALETTE.len()];
        let mut path = String::new();
        for (j, &(x, y)) in pts.iter().enumerate() {
            let _ = write!(path, "{}{:.2},{:.2} ", if j == 0 { "M" } else { "L" }, sx(x), sy(y));
        }
        let _ = writeln!(
            out,
            "<path d=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.2\"/>",
            path.trim_end()
        );
        let lx = w - mr - 140.0;
        let ly = mt + 16.0 * idx as f64;
        let _ = writeln!(
            out,
            "<line x1=\"{lx}\" y1=\"{ly}\" x2=\"{}\" y2=\"{ly}\" stroke=\"{color}\" stroke-width=\"2\"/>",
            lx + 18.0
        );
        let _ = writeln!(
            out,
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\">{label}</text>",
            lx + 24.0,
            ly + 4.0
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Event raster: one row of ticks per agent.
pub fn svg_event_raster(trace: &SimTrace) -> String {
    let n = trace.agents.len();
    let (w, h) = (860.0, 60.0 + 40.0 * n as f64);
    let (ml, mr) = (60.0, 20.0);
    let sx = |t: f64| ml + t / trace.t_final * (w - ml - mr);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">"
    );
    let _ = writeln!(out, "<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>");
    let _ = writeln!(
        out,
        "<text x=\"{}\" y=\"20\" font-family=\"sans-serif\" font-size=\"16\" text-anchor=\"middle\">Trigger events</text>",
        w / 2.0
    );
    for (i, series) in trace.agents.iter().enumerate() {
        let y = 50.0 + 40.0 * i as f64;
        let color = PALETTE[i % PALETTE.len()];
        let _ = writeln!(
            out,
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"end\">agent {} ({})</text>",
            ml - 8.0,
            y + 4.0,
            i + 1,
            series.event_times.len()
        );
        for &t in &series.event_times {
            let _ = writeln!(
                out,
                "<line x1=\"{0:.2}\" y1=\"{1}\" x2=\"{0:.2}\" y2=\"{2}\" stroke=\"{color}\" stroke-width=\"0.8\"/>",
                sx(t),
                y - 12.0,
                y + 12.0
            );
        }
    }
    out.push_str("</svg>\n");
    out
}

/// Write the three figure files (tracking curves, states vs estimates,
/// event raster) into `dir`, decimating long series for readable files.
pub fn write_svgs(trace: &SimTrace, dir: &Path) -> Result<()> {
    let stride = (trace.time.len() / 2000).max(1);
    let decimate = |f: &dyn Fn(usize) -> f64| -> Vec<(f64, f64)> {
        trace
            .time
            .iter()
            .enumerate()
            .step_by(stride)
            .map(|(k, &t)| (t, f(k)))
            .collect()
    };

    let mut tracking: Vec<(String, Vec<(f64, f64)>)> =
        vec![("leader y0".into(), decimate(&|k| trace.leader[k]))];
    for (i, series) in trace.agents.iter().enumerate() {
        tracking.push((format!("y{}", i + 1), decimate(&|k| series.records[k].x[0])));
    }
    std::fs::write(
        dir.join("tracking.svg"),
        svg_line_chart("Tracking curves", &tracking),
    )?;

    let mut estimates: Vec<(String, Vec<(f64, f64)>)> = Vec::new();
    for (i, series) in trace.agents.iter().enumerate() {
        estimates.push((format!("x{},1", i + 1), decimate(&|k| series.records[k].x[0])));
        estimates.push((
            format!("xhat{},1", i + 1),
            decimate(&|k| series.records[k].xhat[0]),
        ));
    }
    std::fs::write(
        dir.join("estimates.svg"),
        svg_line_chart("States and estimates", &estimates),
    )?;

    std::fs::write(dir.join("events.svg"), svg_event_raster(trace))?;
    Ok(())
}

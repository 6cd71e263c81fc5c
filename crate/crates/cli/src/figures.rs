//! Report figures as self-contained SVG documents.
//!
//! No plotting dependency: a tiny builder emits shapes with fixed-precision
//! coordinates so figures from repeated runs are byte-identical. Long
//! traces are decimated per pixel bucket, keeping each bucket's minimum
//! and maximum so envelopes survive.

use skna_classify::ClassifierKind;
use skna_core::features::{iskna, FeatureTable, SignalType};
use skna_core::signal::{Condition, SampledSignal};
use skna_core::stats::auroc;

use crate::experiment::{ClassFoldRow, ClassSummary, FeatureStatRow, FoldTraces};

// ---------------------------------------------------------------------------
// SVG builder
// ---------------------------------------------------------------------------

/// Incrementally assembled SVG document.
pub struct Svg {
    width: f64,
    height: f64,
    body: String,
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

impl Svg {
    pub fn new(width: f64, height: f64) -> Svg {
        let mut svg = Svg {
            width,
            height,
            body: String::new(),
        };
        svg.rect(0.0, 0.0, width, height, "#ffffff");
        svg
    }

    pub fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, fill: &str) {
        self.body.push_str(&format!(
            "<rect x=\"{x:.2}\" y=\"{y:.2}\" width=\"{w:.2}\" height=\"{h:.2}\" fill=\"{fill}\"/>\n"
        ));
    }

    pub fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, stroke: &str, width: f64) {
        self.body.push_str(&format!(
            "<line x1=\"{x1:.2}\" y1=\"{y1:.2}\" x2=\"{x2:.2}\" y2=\"{y2:.2}\" stroke=\"{stroke}\" stroke-width=\"{width:.2}\"/>\n"
        ));
    }

    pub fn polyline(&mut self, pts: &[(f64, f64)], stroke: &str, width: f64, dash: Option<&str>) {
        if pts.len() < 2 {
            return;
        }
        let coords: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
        let dash = dash.map_or(String::new(), |d| format!(" stroke-dasharray=\"{d}\""));
        self.body.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{stroke}\" stroke-width=\"{width:.2}\"{dash}/>\n",
            coords.join(" ")
        ));
    }

    pub fn text(&mut self, x: f64, y: f64, size: f64, anchor: &str, content: &str) {
        self.body.push_str(&format!(
            "<text x=\"{x:.2}\" y=\"{y:.2}\" font-size=\"{size:.2}\" font-family=\"sans-serif\" text-anchor=\"{anchor}\">{}</text>\n",
            esc(content)
        ));
    }

    pub fn finish(self) -> String {
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{:.0}\" height=\"{:.0}\" viewBox=\"0 0 {:.0} {:.0}\">\n{}</svg>\n",
            self.width, self.height, self.width, self.height, self.body
        )
    }
}

// ---------------------------------------------------------------------------
// Plot frame
// ---------------------------------------------------------------------------

/// Maps a data rectangle onto a pixel rectangle (y grows upward in data).
#[derive(Clone, Copy)]
struct Frame {
    px: f64,
    py: f64,
    pw: f64,
    ph: f64,
    xmin: f64,
    xmax: f64,
    ymin: f64,
    ymax: f64,
}

impl Frame {
    fn map(&self, x: f64, y: f64) -> (f64, f64) {
        let fx = if self.xmax > self.xmin {
            (x - self.xmin) / (self.xmax - self.xmin)
        } else {
            0.5
        };
        let fy = if self.ymax > self.ymin {
            (y - self.ymin) / (self.ymax - self.ymin)
        } else {
            0.5
        };
        (self.px + fx * self.pw, self.py + (1.0 - fy) * self.ph)
    }

    fn draw_box(&self, svg: &mut Svg) {
        svg.line(self.px, self.py, self.px, self.py + self.ph, "#444444", 1.0);
        svg.line(
            self.px,
            self.py + self.ph,
            self.px + self.pw,
            self.py + self.ph,
            "#444444",
            1.0,
        );
    }
}

/// Short numeric tick label without trailing zeros.
fn tick_label(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    let a = v.abs();
    let s = if a >= 1000.0 {
        format!("{v:.0}")
    } else if a >= 1.0 {
        format!("{v:.2}")
    } else {
        format!("{v:.3}")
    };
    let s = s.trim_end_matches('0').trim_end_matches('.').to_string();
    if s.is_empty() || s == "-" {
        "0".to_string()
    } else {
        s
    }
}

fn y_ticks(svg: &mut Svg, f: &Frame, n: usize) {
    for i in 0..=n {
        let v = f.ymin + (f.ymax - f.ymin) * i as f64 / n as f64;
        let (x, y) = f.map(f.xmin, v);
        svg.line(x - 3.0, y, x, y, "#444444", 1.0);
        svg.text(x - 5.0, y + 3.0, 9.0, "end", &tick_label(v));
    }
}

fn x_ticks(svg: &mut Svg, f: &Frame, n: usize) {
    for i in 0..=n {
        let v = f.xmin + (f.xmax - f.xmin) * i as f64 / n as f64;
        let (x, y) = f.map(v, f.ymin);
        svg.line(x, y, x, y + 3.0, "#444444", 1.0);
        svg.text(x, y + 13.0, 9.0, "middle", &tick_label(v));
    }
}

// ---------------------------------------------------------------------------
// Trace decimation
// ---------------------------------------------------------------------------

/// Decimates a trace to at most `2 * buckets` points, keeping each
/// bucket's minimum and maximum in index order.
pub fn decimate(samples: &[f64], buckets: usize) -> Vec<(usize, f64)> {
    let n = samples.len();
    if n == 0 || buckets == 0 {
        return Vec::new();
    }
    if n <= 2 * buckets {
        return samples.iter().copied().enumerate().collect();
    }
    let mut out = Vec::with_capacity(2 * buckets);
    for b in 0..buckets {
        let lo = b * n / buckets;
        let hi = ((b + 1) * n / buckets).max(lo + 1);
        let mut i_min = lo;
        let mut i_max = lo;
        for i in lo..hi {
            if samples[i] < samples[i_min] {
                i_min = i;
            }
            if samples[i] > samples[i_max] {
                i_max = i;
            }
        }
        if i_min <= i_max {
            out.push((i_min, samples[i_min]));
            if i_max != i_min {
                out.push((i_max, samples[i_max]));
            }
        } else {
            out.push((i_max, samples[i_max]));
            out.push((i_min, samples[i_min]));
        }
    }
    out
}

const STIM_SHADE: &str = "#fdeaea";

fn shade_stimulation(svg: &mut Svg, f: &Frame, sig: &SampledSignal) {
    for p in &sig.periods {
        if p.condition != Condition::Stimulation {
            continue;
        }
        let t0 = p.start as f64 / sig.fs;
        let t1 = p.end as f64 / sig.fs;
        let (x0, _) = f.map(t0, 0.0);
        let (x1, _) = f.map(t1, 0.0);
        svg.rect(x0, f.py, x1 - x0, f.ph, STIM_SHADE);
    }
}

fn trace_panel(svg: &mut Svg, f: &Frame, sig: &SampledSignal, color: &str, title: &str) {
    shade_stimulation(svg, f, sig);
    f.draw_box(svg);
    let pts: Vec<(f64, f64)> = decimate(&sig.samples, 1000)
        .into_iter()
        .map(|(i, v)| f.map(i as f64 / sig.fs, v))
        .collect();
    svg.polyline(&pts, color, 0.8, None);
    y_ticks(svg, f, 2);
    svg.text(f.px + 4.0, f.py + 11.0, 10.0, "start", title);
}

fn value_range(samples: &[f64]) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in samples {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !(lo < hi) {
        (lo - 1.0, hi + 1.0)
    } else {
        let pad = 0.05 * (hi - lo);
        (lo - pad, hi + pad)
    }
}

/// Trailing moving average over a `window_s`-second span.
fn moving_mean(sig: &SampledSignal, window_s: f64) -> SampledSignal {
    let w = ((window_s * sig.fs).round() as usize).max(1);
    let mut prefix = Vec::with_capacity(sig.len() + 1);
    prefix.push(0.0);
    let mut acc = 0.0;
    for &v in &sig.samples {
        acc += v;
        prefix.push(acc);
    }
    let samples: Vec<f64> = (0..sig.len())
        .map(|i| {
            let lo = i.saturating_sub(w - 1);
            (prefix[i + 1] - prefix[lo]) / (i + 1 - lo) as f64
        })
        .collect();
    SampledSignal::new(sig.fs, samples, sig.periods.clone()).expect("periods unchanged")
}

const CLEAN_COLOR: &str = "#2e7d32";
const BPF_COLOR: &str = "#c62828";
const RECON_COLOR: &str = "#1565c0";

fn signal_color(st: SignalType) -> &'static str {
    match st {
        SignalType::Clean => CLEAN_COLOR,
        SignalType::Bpf => BPF_COLOR,
        SignalType::Recon => RECON_COLOR,
    }
}

// ---------------------------------------------------------------------------
// Figures
// ---------------------------------------------------------------------------

/// Three stacked iSKNA panels (clean / band-pass noisy / reconstruction)
/// for the first held-out subject, sharing the time axis, with
/// stimulation periods shaded.
pub fn fig_iskna_triptych(traces: &FoldTraces, tau_s: f64) -> Option<String> {
    let rows = [
        ("clean", &traces.clean, CLEAN_COLOR),
        ("band-pass noisy", &traces.bpf, BPF_COLOR),
        ("reconstruction", &traces.recon, RECON_COLOR),
    ];
    if rows.iter().any(|(_, sig, _)| sig.len() < 2) {
        return None;
    }
    let width = 760.0;
    let height = 560.0;
    let mut svg = Svg::new(width, height);
    svg.text(
        width / 2.0,
        18.0,
        13.0,
        "middle",
        &format!("held-out subject {}: iSKNA", traces.subject),
    );
    let panel_h = 140.0;
    for (ri, (name, sig, color)) in rows.iter().enumerate() {
        let isk = iskna(sig, tau_s).ok()?;
        let (ymin, ymax) = value_range(&isk.samples);
        let f = Frame {
            px: 60.0,
            py: 40.0 + ri as f64 * (panel_h + 25.0),
            pw: width - 110.0,
            ph: panel_h,
            xmin: 0.0,
            xmax: isk.len() as f64 / isk.fs,
            ymin,
            ymax,
        };
        trace_panel(&mut svg, &f, &isk, color, name);
        if ri == rows.len() - 1 {
            x_ticks(&mut svg, &f, 6);
            svg.text(
                f.px + f.pw / 2.0,
                f.py + f.ph + 26.0,
                10.0,
                "middle",
                "time (s)",
            );
        }
    }
    Some(svg.finish())
}

/// 3x3 grid for the first held-out subject: rows are clean / band-pass
/// noisy / reconstruction; columns are the raw trace, its leaky-integrated
/// envelope (iSKNA), and a moving-average of that envelope (aSKNA).
/// Stimulation periods are shaded.
pub fn fig_signal_grid(traces: &FoldTraces, tau_s: f64, askna_window_s: f64) -> Option<String> {
    let rows = [
        ("clean", &traces.clean, CLEAN_COLOR),
        ("band-pass noisy", &traces.bpf, BPF_COLOR),
        ("reconstruction", &traces.recon, RECON_COLOR),
    ];
    if rows.iter().any(|(_, sig, _)| sig.len() < 2) {
        return None;
    }
    let width = 1060.0;
    let height = 640.0;
    let mut svg = Svg::new(width, height);
    svg.text(
        width / 2.0,
        18.0,
        13.0,
        "middle",
        &format!("held-out subject {}: raw, iSKNA, aSKNA", traces.subject),
    );
    let cols = ["raw (uV)", "iSKNA (uV)", "aSKNA (uV)"];
    let panel_w = 310.0;
    let panel_h = 170.0;
    let x0 = 55.0;
    let y0 = 40.0;
    for (ri, (name, sig, color)) in rows.iter().enumerate() {
        let isk = iskna(sig, tau_s).ok()?;
        let ask = moving_mean(&isk, askna_window_s);
        let series = [(*sig).clone(), isk, ask];
        for (ci, s) in series.iter().enumerate() {
            let (ymin, ymax) = value_range(&s.samples);
            let f = Frame {
                px: x0 + ci as f64 * (panel_w + 30.0),
                py: y0 + ri as f64 * (panel_h + 25.0),
                pw: panel_w,
                ph: panel_h,
                xmin: 0.0,
                xmax: s.len() as f64 / s.fs,
                ymin,
                ymax,
            };
            let title = if ci == 0 {
                format!("{name}")
            } else {
                String::new()
            };
            trace_panel(&mut svg, &f, s, color, &title);
            if ri == 0 {
                svg.text(f.px + panel_w / 2.0, y0 - 8.0, 10.0, "middle", cols[ci]);
            }
            if ri == rows.len() - 1 {
                x_ticks(&mut svg, &f, 4);
                svg.text(
                    f.px + panel_w / 2.0,
                    f.py + panel_h + 24.0,
                    9.0,
                    "middle",
                    "time (s)",
                );
            }
        }
    }
    Some(svg.finish())
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

/// Box-and-whisker comparison of one feature: a baseline and a
/// stimulation box per signal type (pooled windows), with the paired-test
/// significance stars above each pair.
pub fn fig_feature_box(
    features: &FeatureTable,
    feature: &'static str,
    stats: &[FeatureStatRow],
) -> Option<String> {
    let types = [SignalType::Clean, SignalType::Bpf, SignalType::Recon];
    let mut groups: Vec<(SignalType, Vec<f64>, Vec<f64>)> = Vec::new();
    for st in types {
        let pick = |cond: Condition| -> Vec<f64> {
            let mut v: Vec<f64> = features
                .filter(|r| r.signal_type == st && r.condition == cond)
                .map(|r| r.feature(feature).expect("known feature name"))
                .collect();
            v.sort_by(|a, b| a.partial_cmp(b).expect("finite feature values"));
            v
        };
        let base = pick(Condition::Baseline);
        let stim = pick(Condition::Stimulation);
        if !base.is_empty() && !stim.is_empty() {
            groups.push((st, base, stim));
        }
    }
    if groups.is_empty() {
        return None;
    }

    let width = 560.0;
    let height = 360.0;
    let mut svg = Svg::new(width, height);
    svg.text(width / 2.0, 20.0, 13.0, "middle", feature);
    let all: Vec<f64> = groups
        .iter()
        .flat_map(|(_, b, s)| b.iter().chain(s).copied())
        .collect();
    let (ymin, ymax) = value_range(&all);
    let f = Frame {
        px: 60.0,
        py: 40.0,
        pw: width - 90.0,
        ph: height - 100.0,
        xmin: 0.0,
        xmax: groups.len() as f64,
        ymin,
        ymax,
    };
    f.draw_box(&mut svg);
    y_ticks(&mut svg, &f, 4);

    let box_w = 0.28;
    for (gi, (st, base, stim)) in groups.iter().enumerate() {
        let color = signal_color(*st);
        for (k, data) in [base, stim].into_iter().enumerate() {
            let cx = gi as f64 + 0.30 + 0.40 * k as f64;
            let q1 = quantile(data, 0.25);
            let q2 = quantile(data, 0.5);
            let q3 = quantile(data, 0.75);
            let lo = data[0];
            let hi = data[data.len() - 1];
            let (x_l, y_q1) = f.map(cx - box_w / 2.0, q1);
            let (x_r, y_q3) = f.map(cx + box_w / 2.0, q3);
            let (x_c, y_med) = f.map(cx, q2);
            let (_, y_lo) = f.map(cx, lo);
            let (_, y_hi) = f.map(cx, hi);
            let fill = if k == 0 { "#f2f2f2" } else { STIM_SHADE };
            svg.rect(x_l, y_q3, x_r - x_l, y_q1 - y_q3, fill);
            svg.line(x_l, y_q1, x_r, y_q1, color, 1.2);
            svg.line(x_l, y_q3, x_r, y_q3, color, 1.2);
            svg.line(x_l, y_q1, x_l, y_q3, color, 1.2);
            svg.line(x_r, y_q1, x_r, y_q3, color, 1.2);
            svg.line(x_l, y_med, x_r, y_med, color, 2.0);
            svg.line(x_c, y_q3, x_c, y_hi, color, 1.0);
            svg.line(x_c, y_q1, x_c, y_lo, color, 1.0);
        }
        let (gx, _) = f.map(gi as f64 + 0.5, ymin);
        svg.text(gx, f.py + f.ph + 16.0, 10.0, "middle", st.as_str());
        if let Some(row) = stats
            .iter()
            .find(|s| s.signal_type == *st && s.feature == feature)
        {
            svg.text(gx, f.py + 12.0, 11.0, "middle", row.stars);
        }
    }
    svg.text(
        f.px + f.pw / 2.0,
        height - 12.0,
        10.0,
        "middle",
        "left box: baseline, right box: stimulation (pooled windows)",
    );
    Some(svg.finish())
}

fn classifier_dash(kind: ClassifierKind) -> Option<&'static str> {
    match kind {
        ClassifierKind::RandomForest => None,
        ClassifierKind::SvmRbf => Some("6 3"),
        ClassifierKind::LogisticRegression => Some("2 2"),
    }
}

/// Probabilities are drawn at the report tables' six-decimal precision so
/// a curve re-rendered from the CSV matches the one drawn at run time.
fn report_precision(p: f64) -> f64 {
    format!("{p:.6}").parse().unwrap_or(p)
}

/// Pooled ROC staircase over all held-out windows, one curve per
/// (signal type, classifier); ties advance diagonally so the curve's area
/// matches the rank AUROC.
fn roc_points(probs: &[(f64, bool)]) -> Vec<(f64, f64)> {
    let n_pos = probs.iter().filter(|(_, l)| *l).count();
    let n_neg = probs.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Vec::new();
    }
    let mut sorted: Vec<(f64, bool)> = probs.to_vec();
    sorted.sort_by(|a, b| b.0.partial_cmp(&a.0).expect("finite probabilities"));
    let mut pts = vec![(0.0, 0.0)];
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut i = 0;
    while i < sorted.len() {
        let p = sorted[i].0;
        while i < sorted.len() && sorted[i].0 == p {
            if sorted[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        pts.push((fp as f64 / n_neg as f64, tp as f64 / n_pos as f64));
    }
    pts
}

/// ROC curves for one SNR block: 3 signal types x 3 classifiers, with a
/// pooled-AUC legend.
pub fn fig_roc(rows: &[ClassFoldRow], kinds: &[ClassifierKind]) -> Option<String> {
    let width = 620.0;
    let height = 460.0;
    let mut svg = Svg::new(width, height);
    svg.text(
        width / 2.0,
        20.0,
        13.0,
        "middle",
        "stimulation-vs-baseline ROC (pooled held-out windows)",
    );
    let f = Frame {
        px: 60.0,
        py: 40.0,
        pw: 380.0,
        ph: 360.0,
        xmin: 0.0,
        xmax: 1.0,
        ymin: 0.0,
        ymax: 1.0,
    };
    f.draw_box(&mut svg);
    x_ticks(&mut svg, &f, 4);
    y_ticks(&mut svg, &f, 4);
    let (dx0, dy0) = f.map(0.0, 0.0);
    let (dx1, dy1) = f.map(1.0, 1.0);
    svg.line(dx0, dy0, dx1, dy1, "#bbbbbb", 0.8);
    svg.text(f.px + f.pw / 2.0, f.py + f.ph + 28.0, 10.0, "middle", "false positive rate");
    svg.text(18.0, f.py + f.ph / 2.0, 10.0, "middle", "TPR");

    let mut legend_y = 60.0;
    let mut drew = false;
    for st in [SignalType::Clean, SignalType::Bpf, SignalType::Recon] {
        for &kind in kinds {
            let mut pooled: Vec<(f64, bool)> = Vec::new();
            for r in rows.iter().filter(|r| r.signal_type == st && r.classifier == kind) {
                pooled.extend(
                    r.metrics
                        .probabilities
                        .iter()
                        .zip(&r.metrics.labels)
                        .map(|(&p, &l)| (report_precision(p), l)),
                );
            }
            let pts = roc_points(&pooled);
            if pts.is_empty() {
                continue;
            }
            drew = true;
            let mapped: Vec<(f64, f64)> = pts.iter().map(|&(x, y)| f.map(x, y)).collect();
            let color = signal_color(st);
            svg.polyline(&mapped, color, 1.4, classifier_dash(kind));
            let pos: Vec<f64> = pooled.iter().filter(|(_, l)| *l).map(|(p, _)| *p).collect();
            let neg: Vec<f64> = pooled.iter().filter(|(_, l)| !*l).map(|(p, _)| *p).collect();
            let auc_txt = auroc(&pos, &neg)
                .map(|a| format!("{a:.3}"))
                .unwrap_or_else(|_| "-".to_string());
            let lx = 460.0;
            svg.polyline(
                &[(lx, legend_y - 3.0), (lx + 24.0, legend_y - 3.0)],
                color,
                1.4,
                classifier_dash(kind),
            );
            svg.text(
                lx + 30.0,
                legend_y,
                9.0,
                "start",
                &format!("{} {} (AUC {auc_txt})", st.as_str(), kind.as_str()),
            );
            legend_y += 16.0;
        }
    }
    if !drew {
        return None;
    }
    Some(svg.finish())
}

/// One barchart panel: a bar per (classifier, signal type).
fn bar_panel(
    svg: &mut Svg,
    f: &Frame,
    kinds: &[ClassifierKind],
    value: impl Fn(&ClassSummary) -> Option<f64>,
    summaries: &[ClassSummary],
    label_fmt: impl Fn(f64) -> String,
) -> bool {
    f.draw_box(svg);
    y_ticks(svg, f, 5);
    let types = [SignalType::Clean, SignalType::Bpf, SignalType::Recon];
    let bar_w = 0.22;
    let mut drew = false;
    for (ki, &kind) in kinds.iter().enumerate() {
        for (ti, st) in types.iter().enumerate() {
            let Some(v) = summaries
                .iter()
                .find(|s| s.classifier == kind && s.signal_type == *st)
                .and_then(&value)
            else {
                continue;
            };
            drew = true;
            let cx = ki as f64 + 0.2 + 0.3 * ti as f64;
            let (x0, y_top) = f.map(cx - bar_w / 2.0, v.min(f.ymax));
            let (x1, y_base) = f.map(cx + bar_w / 2.0, 0.0);
            svg.rect(x0, y_top, x1 - x0, y_base - y_top, signal_color(*st));
            svg.text((x0 + x1) / 2.0, y_top - 4.0, 8.0, "middle", &label_fmt(v));
        }
        let (gx, _) = f.map(ki as f64 + 0.5, 0.0);
        svg.text(gx, f.py + f.ph + 16.0, 10.0, "middle", kind.as_str());
    }
    drew
}

/// Two grouped bar panels per classifier and signal type: mean held-out
/// accuracy (%) and mean held-out AUC.
pub fn fig_class_bars(summaries: &[ClassSummary], kinds: &[ClassifierKind]) -> Option<String> {
    if summaries.is_empty() || kinds.is_empty() {
        return None;
    }
    let width = 980.0;
    let height = 400.0;
    let mut svg = Svg::new(width, height);
    svg.text(
        width / 2.0,
        20.0,
        13.0,
        "middle",
        "stress classification across held-out subjects",
    );
    let acc_frame = Frame {
        px: 60.0,
        py: 50.0,
        pw: 400.0,
        ph: height - 130.0,
        xmin: 0.0,
        xmax: kinds.len() as f64,
        ymin: 0.0,
        ymax: 100.0,
    };
    let auc_frame = Frame {
        px: 550.0,
        ..acc_frame
    };
    svg.text(acc_frame.px + acc_frame.pw / 2.0, 42.0, 11.0, "middle", "mean accuracy (%)");
    svg.text(auc_frame.px + auc_frame.pw / 2.0, 42.0, 11.0, "middle", "mean AUC");
    let drew = bar_panel(
        &mut svg,
        &acc_frame,
        kinds,
        |s| Some(s.mean_accuracy),
        summaries,
        |v| format!("{v:.0}"),
    );
    let auc_frame = Frame {
        ymax: 1.0,
        ..auc_frame
    };
    bar_panel(
        &mut svg,
        &auc_frame,
        kinds,
        |s| s.mean_auc,
        summaries,
        |v| format!("{v:.2}"),
    );
    if !drew {
        return None;
    }
    let types = [SignalType::Clean, SignalType::Bpf, SignalType::Recon];
    let mut lx = 70.0;
    for st in types {
        svg.rect(lx, height - 34.0, 12.0, 12.0, signal_color(st));
        svg.text(lx + 16.0, height - 24.0, 10.0, "start", st.as_str());
        lx += 110.0;
    }
    Some(svg.finish())
}

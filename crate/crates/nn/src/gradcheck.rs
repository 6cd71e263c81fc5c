//! Central finite-difference verification of every layer's backward pass.
//!
//! For each layer kind a batch of random configurations is drawn; the
//! analytic gradients of a random linear projection of the output are
//! compared against central differences over every input and parameter
//! scalar. The harness is part of the library so test targets and the
//! acceptance suite share one implementation, while the numeric oracle
//! (the two-sided difference quotient) stays independent of the analytic
//! code paths it checks.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::conv::{Conv1d, Deconv1d};
use crate::lstm::{BiLstm, Lstm};
use crate::norm::BatchNorm1d;
use crate::simple::{residual_add, Dropout, Relu};
use crate::tensor::{Mode, Tensor3};

/// Perturbation used by the central difference quotient.
pub const FD_STEP: f64 = 1e-4;
/// Maximum allowed relative disagreement between analytic and numeric
/// gradients.
pub const REL_TOL: f64 = 1e-4;

/// Aggregate result for one layer kind.
#[derive(Debug, Clone)]
pub struct LayerReport {
    pub kind: &'static str,
    pub configs: usize,
    pub values_checked: usize,
    pub max_rel_err: f64,
}

impl LayerReport {
    pub fn passed(&self) -> bool {
        self.max_rel_err <= REL_TOL
    }
}

struct Check {
    max_rel: f64,
    checked: usize,
}

impl Check {
    fn new() -> Self {
        Check {
            max_rel: 0.0,
            checked: 0,
        }
    }

    fn compare(&mut self, analytic: f64, numeric: f64) {
        // Relative scale floored so near-zero gradient pairs are compared
        // at an absolute tolerance of REL_TOL * 1e-3.
        let scale = analytic.abs().max(numeric.abs()).max(1e-3);
        let rel = (analytic - numeric).abs() / scale;
        if rel > self.max_rel {
            self.max_rel = rel;
        }
        self.checked += 1;
    }
}

/// Minimal uniform interface the harness needs from a layer under test.
trait CheckLayer {
    /// Hook invoked before every forward (dropout reseeds its mask
    /// stream here so repeated forwards are identical).
    fn pre_forward(&mut self) {}
    fn forward(&mut self, x: &Tensor3) -> Tensor3;
    fn backward(&mut self, dy: &Tensor3) -> Tensor3;
    fn zero(&mut self) {}
    fn visit(&mut self, _f: &mut dyn FnMut(&mut Vec<f64>, &mut Vec<f64>)) {}
}

fn proj_loss(y: &Tensor3, r: &Tensor3) -> f64 {
    y.data.iter().zip(&r.data).map(|(a, b)| a * b).sum()
}

fn rand_tensor(rng: &mut ChaCha8Rng, b: usize, c: usize, t: usize, lo: f64, hi: f64) -> Tensor3 {
    Tensor3::from_vec(b, c, t, (0..b * c * t).map(|_| rng.gen_range(lo..hi)).collect()).unwrap()
}

fn grad_snapshot(layer: &mut dyn CheckLayer) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    layer.visit(&mut |_, grads| out.push(grads.clone()));
    out
}

fn param_lens(layer: &mut dyn CheckLayer) -> Vec<usize> {
    let mut out = Vec::new();
    layer.visit(&mut |values, _| out.push(values.len()));
    out
}

fn param_get(layer: &mut dyn CheckLayer, group: usize, idx: usize) -> f64 {
    let mut g = 0;
    let mut out = 0.0;
    layer.visit(&mut |values, _| {
        if g == group {
            out = values[idx];
        }
        g += 1;
    });
    out
}

fn param_set(layer: &mut dyn CheckLayer, group: usize, idx: usize, v: f64) {
    let mut g = 0;
    layer.visit(&mut |values, _| {
        if g == group {
            values[idx] = v;
        }
        g += 1;
    });
}

/// Checks one configured layer instance against central differences over
/// every input scalar and every parameter scalar.
fn check_layer(layer: &mut dyn CheckLayer, x0: &Tensor3, rng: &mut ChaCha8Rng, check: &mut Check) {
    layer.zero();
    layer.pre_forward();
    let y = layer.forward(x0);
    let r = rand_tensor(rng, y.batch, y.channels, y.time, -1.0, 1.0);
    let dx = layer.backward(&r);
    let analytic_params = grad_snapshot(layer);

    // Inputs.
    let mut x = x0.clone();
    for i in 0..x.data.len() {
        let orig = x.data[i];
        x.data[i] = orig + FD_STEP;
        layer.pre_forward();
        let lp = proj_loss(&layer.forward(&x), &r);
        x.data[i] = orig - FD_STEP;
        layer.pre_forward();
        let lm = proj_loss(&layer.forward(&x), &r);
        x.data[i] = orig;
        check.compare(dx.data[i], (lp - lm) / (2.0 * FD_STEP));
    }

    // Parameters.
    let lens = param_lens(layer);
    for (g, &len) in lens.iter().enumerate() {
        for i in 0..len {
            let orig = param_get(layer, g, i);
            param_set(layer, g, i, orig + FD_STEP);
            layer.pre_forward();
            let lp = proj_loss(&layer.forward(x0), &r);
            param_set(layer, g, i, orig - FD_STEP);
            layer.pre_forward();
            let lm = proj_loss(&layer.forward(x0), &r);
            param_set(layer, g, i, orig);
            check.compare(analytic_params[g][i], (lp - lm) / (2.0 * FD_STEP));
        }
    }
}

struct ConvAdapter(Conv1d);
impl CheckLayer for ConvAdapter {
    fn forward(&mut self, x: &Tensor3) -> Tensor3 {
        self.0.forward(x, Mode::Train).expect("shape ok")
    }
    fn backward(&mut self, dy: &Tensor3) -> Tensor3 {
        self.0.backward(dy).expect("cached")
    }
    fn zero(&mut self) {
        self.0.zero_grads();
    }
    fn visit(&mut self, f: &mut dyn FnMut(&mut Vec<f64>, &mut Vec<f64>)) {
        self.0.visit_params(&mut |_, v, g| f(v, g));
    }
}

struct DeconvAdapter(Deconv1d);
impl CheckLayer for DeconvAdapter {
    fn forward(&mut self, x: &Tensor3) -> Tensor3 {
        self.0.forward(x, Mode::Train).expect("shape ok")
    }
    fn backward(&mut self, dy: &Tensor3) -> Tensor3 {
        self.0.backward(dy).expect("cached")
    }
    fn zero(&mut self) {
        self.0.zero_grads();
    }
    fn visit(&mut self, f: &mut dyn FnMut(&mut Vec<f64>, &mut Vec<f64>)) {
        self.0.visit_params(&mut |_, v, g| f(v, g));
    }
}

struct BnAdapter(BatchNorm1d);
impl CheckLayer for BnAdapter {
    fn forward(&mut self, x: &Tensor3) -> Tensor3 {
        self.0.forward(x, Mode::Train).expect("shape ok")
    }
    fn backward(&mut self, dy: &Tensor3) -> Tensor3 {
        self.0.backward(dy).expect("cached")
    }
    fn zero(&mut self) {
        self.0.zero_grads();
    }
    fn visit(&mut self, f: &mut dyn FnMut(&mut Vec<f64>, &mut Vec<f64>)) {
        self.0.visit_params(&mut |_, v, g| f(v, g));
    }
}

struct DropoutAdapter {
    layer: Dropout,
    seed: u64,
}
impl CheckLayer for DropoutAdapter {
    fn pre_forward(&mut self) {
        self.layer.reseed(self.seed);
    }
    fn forward(&mut self, x: &Tensor3) -> Tensor3 {
        self.layer.forward(x, Mode::Train).expect("shape ok")
    }
    fn backward(&mut self, dy: &Tensor3) -> Tensor3 {
        self.layer.backward(dy).expect("cached")
    }
}

struct ReluAdapter(Relu);
impl CheckLayer for ReluAdapter {
    fn forward(&mut self, x: &Tensor3) -> Tensor3 {
        self.0.forward(x, Mode::Train).expect("shape ok")
    }
    fn backward(&mut self, dy: &Tensor3) -> Tensor3 {
        self.0.backward(dy).expect("cached")
    }
}

struct LstmAdapter(Lstm);
impl CheckLayer for LstmAdapter {
    fn forward(&mut self, x: &Tensor3) -> Tensor3 {
        self.0.forward(x, Mode::Train).expect("shape ok")
    }
    fn backward(&mut self, dy: &Tensor3) -> Tensor3 {
        self.0.backward(dy).expect("cached")
    }
    fn zero(&mut self) {
        self.0.zero_grads();
    }
    fn visit(&mut self, f: &mut dyn FnMut(&mut Vec<f64>, &mut Vec<f64>)) {
        self.0.visit_params(&mut |_, v, g| f(v, g));
    }
}

struct BiLstmAdapter(BiLstm);
impl CheckLayer for BiLstmAdapter {
    fn forward(&mut self, x: &Tensor3) -> Tensor3 {
        self.0.forward(x, Mode::Train).expect("shape ok")
    }
    fn backward(&mut self, dy: &Tensor3) -> Tensor3 {
        self.0.backward(dy).expect("cached")
    }
    fn zero(&mut self) {
        self.0.zero_grads();
    }
    fn visit(&mut self, f: &mut dyn FnMut(&mut Vec<f64>, &mut Vec<f64>)) {
        self.0.visit_params(&mut |_, v, g| f(v, g));
    }
}

/// Residual addition checked directly: the gradient of a projection of
/// `a + b` with respect to either branch is the projection weights.
fn check_residual(rng: &mut ChaCha8Rng, check: &mut Check) {
    let b = rng.gen_range(1..=2);
    let c = rng.gen_range(1..=4);
    let t = rng.gen_range(4..=16);
    let a0 = rand_tensor(rng, b, c, t, -1.0, 1.0);
    let b0 = rand_tensor(rng, b, c, t, -1.0, 1.0);
    let r = rand_tensor(rng, b, c, t, -1.0, 1.0);
    // Analytic: upstream gradient flows unchanged to both branches.
    for branch in 0..2 {
        let base = if branch == 0 { &a0 } else { &b0 };
        let mut pert = base.clone();
        for i in 0..pert.data.len() {
            let orig = pert.data[i];
            pert.data[i] = orig + FD_STEP;
            let yp = if branch == 0 {
                residual_add(&pert, &b0).unwrap()
            } else {
                residual_add(&a0, &pert).unwrap()
            };
            pert.data[i] = orig - FD_STEP;
            let ym = if branch == 0 {
                residual_add(&pert, &b0).unwrap()
            } else {
                residual_add(&a0, &pert).unwrap()
            };
            pert.data[i] = orig;
            let numeric = (proj_loss(&yp, &r) - proj_loss(&ym, &r)) / (2.0 * FD_STEP);
            check.compare(r.data[i], numeric);
        }
    }
}

/// Every layer kind exercised by the harness.
pub const KINDS: [&str; 8] = [
    "conv1d",
    "deconv1d",
    "batchnorm1d",
    "dropout",
    "relu",
    "lstm",
    "bilstm",
    "residual_add",
];

/// Runs `configs_per_kind` random configurations for every layer kind and
/// returns one report per kind.
pub fn run_all(seed: u64, configs_per_kind: usize) -> Vec<LayerReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut reports = Vec::new();
    for kind in KINDS {
        let mut check = Check::new();
        for cfg in 0..configs_per_kind {
            match kind {
                "conv1d" => {
                    let cin = rng.gen_range(1..=4);
                    let cout = rng.gen_range(1..=4);
                    let stride = rng.gen_range(1..=2);
                    let b = rng.gen_range(1..=2);
                    let t = rng.gen_range(4..=16);
                    let layer = Conv1d::new(cin, cout, 3, stride, 1, &mut rng);
                    let x = rand_tensor(&mut rng, b, cin, t, -1.0, 1.0);
                    check_layer(&mut ConvAdapter(layer), &x, &mut rng, &mut check);
                }
                "deconv1d" => {
                    let cin = rng.gen_range(1..=4);
                    let cout = rng.gen_range(1..=4);
                    let op = rng.gen_range(0..=1);
                    let b = rng.gen_range(1..=2);
                    let t = rng.gen_range(4..=16);
                    let layer = Deconv1d::new(cin, cout, 3, 2, 1, op, &mut rng);
                    let x = rand_tensor(&mut rng, b, cin, t, -1.0, 1.0);
                    check_layer(&mut DeconvAdapter(layer), &x, &mut rng, &mut check);
                }
                "batchnorm1d" => {
                    let c = rng.gen_range(1..=4);
                    let b = rng.gen_range(1..=2);
                    let t = rng.gen_range(4..=16);
                    let mut layer = BatchNorm1d::new(c);
                    // Non-trivial scale/shift so their gradients matter.
                    for v in &mut layer.gamma {
                        *v = rng.gen_range(0.5..1.5);
                    }
                    for v in &mut layer.beta {
                        *v = rng.gen_range(-0.5..0.5);
                    }
                    let x = rand_tensor(&mut rng, b, c, t, -1.0, 1.0);
                    check_layer(&mut BnAdapter(layer), &x, &mut rng, &mut check);
                }
                "dropout" => {
                    let c = rng.gen_range(1..=4);
                    let b = rng.gen_range(1..=2);
                    let t = rng.gen_range(4..=16);
                    let mask_seed = rng.gen();
                    let layer = Dropout::new(0.3, mask_seed).unwrap();
                    let x = rand_tensor(&mut rng, b, c, t, -1.0, 1.0);
                    check_layer(
                        &mut DropoutAdapter {
                            layer,
                            seed: mask_seed,
                        },
                        &x,
                        &mut rng,
                        &mut check,
                    );
                }
                "relu" => {
                    let c = rng.gen_range(1..=4);
                    let b = rng.gen_range(1..=2);
                    let t = rng.gen_range(4..=16);
                    // Keep inputs away from the kink at zero so the
                    // difference quotient stays two-sided-valid.
                    let mut x = rand_tensor(&mut rng, b, c, t, 0.05, 1.0);
                    for (i, v) in x.data.iter_mut().enumerate() {
                        if i % 2 == 0 {
                            *v = -*v;
                        }
                    }
                    check_layer(&mut ReluAdapter(Relu::new()), &x, &mut rng, &mut check);
                }
                "lstm" => {
                    let cin = rng.gen_range(1..=4);
                    let h = rng.gen_range(1..=4);
                    let b = rng.gen_range(1..=2);
                    let t = rng.gen_range(2..=8);
                    let layer = Lstm::new(cin, h, &mut rng);
                    let x = rand_tensor(&mut rng, b, cin, t, -1.0, 1.0);
                    check_layer(&mut LstmAdapter(layer), &x, &mut rng, &mut check);
                }
                "bilstm" => {
                    let cin = rng.gen_range(1..=4);
                    let h = rng.gen_range(1..=3);
                    let b = rng.gen_range(1..=2);
                    let t = rng.gen_range(2..=8);
                    let layer = BiLstm::new(cin, h, &mut rng);
                    let x = rand_tensor(&mut rng, b, cin, t, -1.0, 1.0);
                    check_layer(&mut BiLstmAdapter(layer), &x, &mut rng, &mut check);
                }
                "residual_add" => check_residual(&mut rng, &mut check),
                _ => unreachable!("unknown layer kind {kind} (config {cfg})"),
            }
        }
        reports.push(LayerReport {
            kind,
            configs: configs_per_kind,
            values_checked: check.checked,
            max_rel_err: check.max_rel,
        });
    }
    reports
}

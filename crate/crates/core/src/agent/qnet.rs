//! 8 -> 60 -> 9 multilayer perceptron with a ReLU hidden layer, trained by
//! Adam on the squared temporal-difference error.

use std::fmt::Write as _;

use rand::Rng;

use crate::error::{Error, Result};

pub const INPUTS: usize = 8;
pub const HIDDEN: usize = 60;
pub const OUTPUTS: usize = 9;

const CHECKPOINT_MAGIC: &str = "dpws-qnet";
const CHECKPOINT_VERSION: u32 = 1;

/// Flat parameter storage. Layout: `w1` (HIDDEN x INPUTS, row-major), `b1`,
/// `w2` (OUTPUTS x HIDDEN, row-major), `b2`.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

impl Params {
    pub fn zeros() -> Self {
        Params {
            w1: vec![0.0; HIDDEN * INPUTS],
            b1: vec![0.0; HIDDEN],
            w2: vec![0.0; OUTPUTS * HIDDEN],
            b2: vec![0.0; OUTPUTS],
        }
    }

    fn tensors(&self) -> [(&'static str, usize, usize, &Vec<f64>); 4] {
        [
            ("w1", HIDDEN, INPUTS, &self.w1),
            ("b1", HIDDEN, 1, &self.b1),
            ("w2", OUTPUTS, HIDDEN, &self.w2),
            ("b2", OUTPUTS, 1, &self.b2),
        ]
    }

    fn tensors_mut(&mut self) -> [&mut Vec<f64>; 4] {
        [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.w1
            .iter()
            .chain(&self.b1)
            .chain(&self.w2)
            .chain(&self.b2)
            .copied()
    }

    pub fn len(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Mutable access by flat index, in the layout order above.
    pub fn get_mut(&mut self, mut idx: usize) -> &mut f64 {
        for t in self.tensors_mut() {
            if idx < t.len() {
                return &mut t[idx];
            }
            idx -= t.len();
        }
        panic!("parameter index out of range")
    }
}

/// One training sample with its regression target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetSample {
    pub state: [f64; INPUTS],
    pub action: usize,
    pub target: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 0.05,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-7,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct AdamState {
    m: Params,
    v: Params,
    steps: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QNetwork {
    params: Params,
    adam: AdamState,
}

impl QNetwork {
    /// Uniform fan-in initialisation, `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    pub fn new<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let mut params = Params::zeros();
        let l1 = 1.0 / (INPUTS as f64).sqrt();
        let l2 = 1.0 / (HIDDEN as f64).sqrt();
        params.w1.iter_mut().for_each(|w| *w = rng.random_range(-l1..l1));
        params.b1.iter_mut().for_each(|w| *w = rng.random_range(-l1..l1));
        params.w2.iter_mut().for_each(|w| *w = rng.random_range(-l2..l2));
        params.b2.iter_mut().for_each(|w| *w = rng.random_range(-l2..l2));
        Self::from_params(params)
    }

    pub fn from_params(params: Params) -> Self {
        QNetwork {
            params,
            adam: AdamState {
                m: Params::zeros(),
                v: Params::zeros(),
                steps: 0,
            },
        }
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut Params {
        &mut self.params
    }

    fn hidden(&self, x: &[f64; INPUTS]) -> [f64; HIDDEN] {
        let mut h = [0.0; HIDDEN];
        for (j, hj) in h.iter_mut().enumerate() {
            let row = &self.params.w1[j * INPUTS..(j + 1) * INPUTS];
            let z = self.params.b1[j] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
            *hj = z.max(0.0);
        }
        h
    }

    fn output(&self, h: &[f64; HIDDEN]) -> [f64; OUTPUTS] {
        let mut q = [0.0; OUTPUTS];
        for (k, qk) in q.iter_mut().enumerate() {
            let row = &self.params.w2[k * HIDDEN..(k + 1) * HIDDEN];
            *qk = self.params.b2[k] + row.iter().zip(h).map(|(w, v)| w * v).sum::<f64>();
        }
        q
    }

    pub fn forward(&self, x: &[f64; INPUTS]) -> [f64; OUTPUTS] {
        self.output(&self.hidden(x))
    }

    /// Mean of `(Q(s, a) - target)^2` over the batch.
    pub fn loss(&self, batch: &[TargetSample]) -> f64 {
        if batch.is_empty() {
            return 0.0;
        }
        batch
            .iter()
            .map(|s| {
                let e = self.forward(&s.state)[s.action] - s.target;
                e * e
            })
            .sum::<f64>()
            / batch.len() as f64
    }

    /// Loss and its gradient with respect to every parameter.
    pub fn loss_and_gradient(&self, batch: &[TargetSample]) -> (f64, Params) {
        let mut grad = Params::zeros();
        if batch.is_empty() {
            return (0.0, grad);
        }
        let n = batch.len() as f64;
        let mut loss = 0.0;
        for s in batch {
            let h = self.hidden(&s.state);
            let q = self.output(&h);
            let err = q[s.action] - s.target;
            loss += err * err;
            let dq = 2.0 * err / n;

            // only the chosen action's output carries gradient
            let a = s.action;
            grad.b2[a] += dq;
            let w2_row = &self.params.w2[a * HIDDEN..(a + 1) * HIDDEN];
            for j in 0..HIDDEN {
                grad.w2[a * HIDDEN + j] += dq * h[j];
                if h[j] > 0.0 {
                    let dz = dq * w2_row[j];
                    grad.b1[j] += dz;
                    for (i, x) in s.state.iter().enumerate() {
                        grad.w1[j * INPUTS + i] += dz * x;
                    }
                }
            }
        }
        (loss / n, grad)
    }

    /// One Adam step on the batch. Returns the loss before the update.
    pub fn train_on(&mut self, batch: &[TargetSample], adam: &AdamConfig) -> f64 {
        let (loss, grad) = self.loss_and_gradient(batch);
        self.adam.steps += 1;
        let t = self.adam.steps as i32;
        let bc1 = 1.0 - adam.beta1.powi(t);
        let bc2 = 1.0 - adam.beta2.powi(t);
        let params = self.params.tensors_mut();
        let ms = self.adam.m.tensors_mut();
        let vs = self.adam.v.tensors_mut();
        let gs = [&grad.w1, &grad.b1, &grad.w2, &grad.b2];
        for (((p, m), v), g) in params.into_iter().zip(ms).zip(vs).zip(gs) {
            for i in 0..p.len() {
                m[i] = adam.beta1 * m[i] + (1.0 - adam.beta1) * g[i];
                v[i] = adam.beta2 * v[i] + (1.0 - adam.beta2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] -= adam.learning_rate * m_hat / (v_hat.sqrt() + adam.epsilon);
            }
        }
        loss
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(f64::is_finite)
    }

    /// Text checkpoint: a header line, then per tensor a `name rows cols`
    /// line followed by one line of row-major values.
    pub fn to_checkpoint(&self) -> String {
        let mut out = format!("{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}\n");
        for (name, rows, cols, values) in self.params.tensors() {
            let _ = writeln!(out, "{name} {rows} {cols}");
            let line: Vec<String> = values.iter().map(|v| format!("{v:e}")).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn from_checkpoint(text: &str) -> Result<Self> {
        let bad = |m: String| Error::Checkpoint(m);
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| bad("empty checkpoint".into()))?;
        let mut parts = header.split_whitespace();
        if parts.next() != Some(CHECKPOINT_MAGIC) {
            return Err(bad(format!("unrecognised header {header:?}")));
        }
        let version: u32 = parts
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| bad("missing version".into()))?;
        if version != CHECKPOINT_VERSION {
            return Err(bad(format!("unsupported version {version}")));
        }
        let mut params = Params::zeros();
        let expected: Vec<_> = Params::zeros()
            .tensors()
            .iter()
            .map(|&(n, r, c, _)| (n, r, c))
            .collect();
        for (tensor, (name, rows, cols)) in params.tensors_mut().into_iter().zip(expected) {
            let shape = lines
                .next()
                .ok_or_else(|| bad(format!("missing tensor {name}")))?;
            let want = format!("{name} {rows} {cols}");
            if shape.trim() != want {
                return Err(bad(format!("expected shape line {want:?}, found {shape:?}")));
            }
            let values: std::result::Result<Vec<f64>, _> = lines
                .next()
                .unwrap_or("")
                .split_whitespace()
                .map(str::parse::<f64>)
                .collect();
            let values = values.map_err(|e| bad(format!("{name}: {e}")))?;
            if values.len() != rows * cols {
                return Err(bad(format!(
                    "{name}: {} values for shape {rows}x{cols}",
                    values.len()
                )));
            }
            *tensor = values;
        }
        Ok(Self::from_params(params))
    }
}

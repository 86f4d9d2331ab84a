//! Masked MSLE loss, backpropagation, Adam and the training loops.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Activations, MlpModel, Shape, N_OUTPUTS};
use crate::dataset::Dataset;
use crate::{Concentrations, Error, Execution, Result};

/// Rows per gradient chunk. Chunk sums are added in chunk order, so results
/// do not depend on how chunks are scheduled.
const CHUNK: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub n1: usize,
    pub n2: usize,
    pub execution: Execution,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.001,
            batch_size: 1024,
            epochs: 30,
            seed: 0,
            n1: 64,
            n2: 32,
            execution: Execution::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidParameter(
                "learning rate must be positive".into(),
            ));
        }
        if self.batch_size == 0 || self.n1 == 0 || self.n2 == 0 {
            return Err(Error::InvalidParameter(
                "batch size and layer sizes must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Normalized inputs and targets (NaN = NA), row-major.
#[derive(Debug, Clone)]
pub struct TrainingBatch {
    inputs: Vec<f64>,
    targets: Vec<[f64; N_OUTPUTS]>,
    dim: usize,
}

impl TrainingBatch {
    /// Normalizes raw feature rows with the model's statistics.
    pub fn new(
        model: &MlpModel,
        features: &[Vec<f64>],
        targets: &[Concentrations],
    ) -> Result<Self> {
        if features.len() != targets.len() {
            return Err(Error::DimensionMismatch {
                expected: features.len(),
                actual: targets.len(),
            });
        }
        let dim = model.input_dim();
        let mut inputs = vec![0.0; features.len() * dim];
        for (row, out) in features.iter().zip(inputs.chunks_mut(dim.max(1))) {
            model.normalize_into(row, out)?;
        }
        let targets = targets
            .iter()
            .map(|t| t.map(|v| v.unwrap_or(f64::NAN)))
            .collect();
        Ok(TrainingBatch {
            inputs,
            targets,
            dim,
        })
    }

    pub fn from_dataset(model: &MlpModel, data: &Dataset) -> Result<Self> {
        let features: Vec<Vec<f64>> = data
            .rows
            .iter()
            .map(|r| r.features.values.clone())
            .collect();
        let targets: Vec<Concentrations> = data.rows.iter().map(|r| r.targets).collect();
        Self::new(model, &features, &targets)
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    fn input(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.dim..(i + 1) * self.dim]
    }
}

/// Squared log error per present target and its derivative w.r.t. the raw output.
/// The clamp at 0 passes no gradient.
fn output_delta(
    out: &[f64; N_OUTPUTS],
    target: &[f64; N_OUTPUTS],
) -> (f64, usize, [f64; N_OUTPUTS]) {
    let (mut sq, mut count, mut delta) = (0.0, 0, [0.0; N_OUTPUTS]);
    for k in 0..N_OUTPUTS {
        let y = target[k];
        if y.is_nan() {
            continue;
        }
        let yhat = if out[k] > 0.0 { out[k] } else { 0.0 };
        let e = yhat.ln_1p() - y.ln_1p();
        sq += e * e;
        count += 1;
        if out[k] > 0.0 {
            delta[k] = 2.0 * e / (1.0 + yhat);
        }
    }
    (sq, count, delta)
}

/// Mean of `(log1p(max(ŷ, 0)) − log1p(y))²` over present targets.
pub fn msle_loss(outputs: &[[f64; N_OUTPUTS]], targets: &[Concentrations]) -> Result<f64> {
    if outputs.len() != targets.len() {
        return Err(Error::DimensionMismatch {
            expected: outputs.len(),
            actual: targets.len(),
        });
    }
    let (mut sq, mut count) = (0.0, 0usize);
    for (o, t) in outputs.iter().zip(targets) {
        let (s, c, _) = output_delta(o, &t.map(|v| v.unwrap_or(f64::NAN)));
        sq += s;
        count += c;
    }
    if count == 0 {
        return Err(Error::UndefinedInput(
            "loss over a batch without present targets".into(),
        ));
    }
    Ok(sq / count as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub loss: f64,
    /// Same layout as [`MlpModel::params`].
    pub params: Vec<f64>,
}

struct Partial {
    sq: f64,
    count: usize,
    grads: Vec<f64>,
}

fn accumulate(model: &MlpModel, data: &TrainingBatch, rows: &[usize]) -> Partial {
    let s: Shape = model.shape();
    let p = model.params();
    let (o_b1, o_w2, o_b2, o_w3, o_b3) = (s.b1(), s.w2(), s.b2(), s.output_offset(), s.b3());
    let mut g = vec![0.0; s.param_count()];
    let mut act = Activations::new(&s);
    let mut d2 = vec![0.0; s.n2];
    let mut d1 = vec![0.0; s.n1];
    let (mut sq_total, mut count_total) = (0.0, 0);
    for &i in rows {
        let x = data.input(i);
        model.forward_normalized(x, &mut act);
        let (sq, count, delta) = output_delta(&act.out, &data.targets[i]);
        sq_total += sq;
        count_total += count;
        if delta.iter().all(|d| *d == 0.0) {
            continue;
        }
        // Output layer.
        d2.iter_mut().for_each(|v| *v = 0.0);
        for (k, &dk) in delta.iter().enumerate() {
            if dk == 0.0 {
                continue;
            }
            g[o_b3 + k] += dk;
            let row = o_w3 + k * s.n2;
            for j in 0..s.n2 {
                g[row + j] += dk * act.h2[j];
                d2[j] += p[row + j] * dk;
            }
        }
        for j in 0..s.n2 {
            if act.z2[j] <= 0.0 {
                d2[j] = 0.0;
            }
        }
        // Second hidden layer.
        d1.iter_mut().for_each(|v| *v = 0.0);
        for (j, &dj) in d2.iter().enumerate() {
            if dj == 0.0 {
                continue;
            }
            g[o_b2 + j] += dj;
            let row = o_w2 + j * s.n1;
            for m in 0..s.n1 {
                g[row + m] += dj * act.h1[m];
                d1[m] += p[row + m] * dj;
            }
        }
        for m in 0..s.n1 {
            if act.z1[m] <= 0.0 {
                d1[m] = 0.0;
            }
        }
        // First hidden layer.
        for (m, &dm) in d1.iter().enumerate() {
            if dm == 0.0 {
                continue;
            }
            g[o_b1 + m] += dm;
            let row = m * s.inputs;
            for (gi, xi) in g[row..row + s.inputs].iter_mut().zip(x) {
                *gi += dm * xi;
            }
        }
    }
    Partial {
        sq: sq_total,
        count: count_total,
        grads: g,
    }
}

fn gradient_rows(
    model: &MlpModel,
    data: &TrainingBatch,
    rows: &[usize],
    exec: Execution,
) -> Result<Gradient> {
    let parts = exec.map_chunks(rows, CHUNK, |chunk| accumulate(model, data, chunk));
    let mut total = Partial {
        sq: 0.0,
        count: 0,
        grads: vec![0.0; model.params().len()],
    };
    for part in parts {
        total.sq += part.sq;
        total.count += part.count;
        for (a, b) in total.grads.iter_mut().zip(&part.grads) {
            *a += b;
        }
    }
    if total.count == 0 {
        return Err(Error::UndefinedInput(
            "gradient over a batch without present targets".into(),
        ));
    }
    let n = total.count as f64;
    total.grads.iter_mut().for_each(|v| *v /= n);
    Ok(Gradient {
        loss: total.sq / n,
        params: total.grads,
    })
}

/// Loss and exact gradient over every row of `data`.
pub fn gradient(model: &MlpModel, data: &TrainingBatch, exec: Execution) -> Result<Gradient> {
    let rows: Vec<usize> = (0..data.len()).collect();
    gradient_rows(model, data, &rows, exec)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl AdamState {
    pub fn new(n_params: usize) -> Self {
        AdamState {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }
}

/// One bias-corrected Adam update of `params` in place.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, lr: f64) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::DimensionMismatch {
            expected: state.m.len(),
            actual: if params.len() != state.m.len() {
                params.len()
            } else {
                grads.len()
            },
        });
    }
    state.t += 1;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - b1.powi(state.t as i32);
    let c2 = 1.0 - b2.powi(state.t as i32);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g;
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g;
        let m_hat = state.m[i] / c1;
        let v_hat = state.v[i] / c2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + state.epsilon);
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: MlpModel,
    /// Mean training loss of each epoch, measured on each batch before its update.
    pub loss_trace: Vec<f64>,
}

/// Per-feature mean and standard deviation over finite values; a constant or
/// absent feature gets std 1.
fn normalization(data: &Dataset) -> (Vec<f64>, Vec<f64>) {
    let dim = data.feature_names.len();
    let mut mean = vec![0.0; dim];
    let mut std = vec![1.0; dim];
    for f in 0..dim {
        let (mut n, mut mu, mut m2) = (0.0, 0.0, 0.0);
        for r in &data.rows {
            let x = r.features.values[f];
            if x.is_finite() {
                n += 1.0;
                let d = x - mu;
                mu += d / n;
                m2 += d * (x - mu);
            }
        }
        if n > 0.0 {
            mean[f] = mu;
            let sd = (m2 / n).sqrt();
            if sd > 1e-12 && sd.is_finite() {
                std[f] = sd;
            }
        }
    }
    (mean, std)
}

fn check_dataset(data: &Dataset) -> Result<()> {
    if data.rows.is_empty() {
        return Err(Error::EmptyDataset("no training rows".into()));
    }
    if let Some(r) = data
        .rows
        .iter()
        .find(|r| r.features.values.len() != data.feature_names.len())
    {
        return Err(Error::DimensionMismatch {
            expected: data.feature_names.len(),
            actual: r.features.values.len(),
        });
    }
    if data
        .rows
        .iter()
        .all(|r| r.targets.iter().all(Option::is_none))
    {
        return Err(Error::EmptyDataset("no present targets".into()));
    }
    Ok(())
}

fn he_uniform(rng: &mut ChaCha8Rng, w: &mut [f64], fan_in: usize) {
    let limit = (6.0 / fan_in as f64).sqrt();
    for v in w {
        *v = rng.random_range(-limit..limit);
    }
}

/// Trains a fresh model on `data` (He-uniform weights, output biases at the
/// back-transformed mean log target), shuffling rows each epoch with `config.seed`.
pub fn train(data: &Dataset, preset: &str, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    check_dataset(data)?;
    let (mean, std) = normalization(data);
    let shape = Shape {
        inputs: data.feature_names.len(),
        n1: config.n1,
        n2: config.n2,
    };
    let mut model = MlpModel::from_parts(
        preset.to_string(),
        data.feature_names.clone(),
        shape,
        mean,
        std,
        None,
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    {
        let p = model.params_mut();
        he_uniform(&mut rng, &mut p[..shape.b1()], shape.inputs);
        he_uniform(&mut rng, &mut p[shape.w2()..shape.b2()], shape.n1);
        he_uniform(
            &mut rng,
            &mut p[shape.output_offset()..shape.b3()],
            shape.n2,
        );
        let b3 = shape.b3();
        for k in 0..N_OUTPUTS {
            let logs: Vec<f64> = data
                .rows
                .iter()
                .filter_map(|r| r.targets[k])
                .map(f64::ln_1p)
                .collect();
            if !logs.is_empty() {
                p[b3 + k] = (logs.iter().sum::<f64>() / logs.len() as f64).exp_m1();
            }
        }
    }
    let batch = TrainingBatch::from_dataset(&model, data)?;
    let mut state = AdamState::new(model.params().len());
    let mut order: Vec<usize> = (0..batch.len()).collect();
    let mut trace = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        let (mut sq, mut count) = (0.0, 0.0);
        for idx in order.chunks(config.batch_size) {
            let g = match gradient_rows(&model, &batch, idx, config.execution) {
                Ok(g) => g,
                Err(Error::UndefinedInput(_)) => continue,
                Err(e) => return Err(e),
            };
            let n = idx
                .iter()
                .map(|&i| batch.targets[i].iter().filter(|v| !v.is_nan()).count())
                .sum::<usize>() as f64;
            sq += g.loss * n;
            count += n;
            adam_step(
                model.params_mut(),
                &g.params,
                &mut state,
                config.learning_rate,
            )?;
        }
        trace.push(sq / count);
    }
    Ok(TrainOutcome {
        model,
        loss_trace: trace,
    })
}

/// Retrains only the output layer of `global` on `data`, starting from the
/// global output weights. Hidden layers and normalization stay bit-identical.
pub fn transfer_fit(
    global: &MlpModel,
    data: &Dataset,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    if data.feature_names != global.feature_names() {
        return Err(Error::LayoutMismatch(format!(
            "regional features [{}] differ from the model's [{}]",
            data.feature_names.join(","),
            global.feature_names().join(",")
        )));
    }
    check_dataset(data)?;
    let shape = global.shape();
    let batch = TrainingBatch::from_dataset(global, data)?;
    // Hidden activations never change, so compute them once.
    let mut act = Activations::new(&shape);
    let hidden: Vec<Vec<f64>> = (0..batch.len())
        .map(|i| {
            global.forward_normalized(batch.input(i), &mut act);
            act.h2.clone()
        })
        .collect();

    let mut model = global.clone();
    let off = shape.output_offset();
    let n_tail = model.params().len() - off;
    let mut state = AdamState::new(n_tail);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..batch.len()).collect();
    let mut trace = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        let (mut sq, mut count) = (0.0, 0usize);
        for idx in order.chunks(config.batch_size) {
            let tail = &model.params()[off..];
            let (w3, b3) = tail.split_at(N_OUTPUTS * shape.n2);
            let mut g = vec![0.0; n_tail];
            let mut batch_count = 0;
            for &i in idx {
                let h = &hidden[i];
                let mut out = [0.0; N_OUTPUTS];
                for k in 0..N_OUTPUTS {
                    out[k] = b3[k]
                        + w3[k * shape.n2..(k + 1) * shape.n2]
                            .iter()
                            .zip(h)
                            .map(|(w, x)| w * x)
                            .sum::<f64>();
                }
                let (s, c, delta) = output_delta(&out, &batch.targets[i]);
                sq += s;
                batch_count += c;
                for k in 0..N_OUTPUTS {
                    if delta[k] != 0.0 {
                        g[N_OUTPUTS * shape.n2 + k] += delta[k];
                        for j in 0..shape.n2 {
                            g[k * shape.n2 + j] += delta[k] * h[j];
                        }
                    }
                }
            }
            if batch_count == 0 {
                continue;
            }
            count += batch_count;
            g.iter_mut().for_each(|v| *v /= batch_count as f64);
            adam_step(
                &mut model.params_mut()[off..],
                &g,
                &mut state,
                config.learning_rate,
            )?;
        }
        trace.push(sq / count as f64);
    }
    Ok(TrainOutcome {
        model,
        loss_trace: trace,
    })
}

//! Synthetic training distributions: the Gaussian ring, a conditional ring
//! with two modes per label, and short circular trajectories.

use std::f64::consts::PI;
use std::io::Write;

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nd::Tensor;
use crate::rng::Rng;

/// Equal-weight isotropic Gaussians centred on a circle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RingMixtureSpec {
    pub n_modes: usize,
    pub radius: f64,
    pub std: f64,
}

impl Default for RingMixtureSpec {
    fn default() -> Self {
        Self {
            n_modes: 8,
            radius: 2.0,
            std: 0.02,
        }
    }
}

impl RingMixtureSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_modes == 0 || !(self.radius > 0.0) || !(self.std > 0.0) {
            return Err(Error::Config(format!(
                "ring needs n_modes >= 1, radius > 0 and std > 0: {self:?}"
            )));
        }
        Ok(())
    }

    /// Mode `k` sits at angle `2πk / n_modes`.
    pub fn center(&self, k: usize) -> [f64; 2] {
        let a = 2.0 * PI * k as f64 / self.n_modes as f64;
        [self.radius * a.cos(), self.radius * a.sin()]
    }

    pub fn centers(&self) -> Vec<[f64; 2]> {
        (0..self.n_modes).map(|k| self.center(k)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionalRingSpec {
    pub base: RingMixtureSpec,
    pub n_labels: usize,
    pub modes_per_label: usize,
}

impl Default for ConditionalRingSpec {
    fn default() -> Self {
        Self {
            base: RingMixtureSpec::default(),
            n_labels: 4,
            modes_per_label: 2,
        }
    }
}

impl ConditionalRingSpec {
    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        if self.n_labels == 0 || self.n_labels * self.modes_per_label != self.base.n_modes {
            return Err(Error::Config(format!(
                "n_labels ({}) x modes_per_label ({}) must equal n_modes ({})",
                self.n_labels, self.modes_per_label, self.base.n_modes
            )));
        }
        Ok(())
    }

    /// Label `k` owns the adjacent modes `k·m .. (k+1)·m`.
    pub fn owned_modes(&self, label: usize) -> std::ops::Range<usize> {
        label * self.modes_per_label..(label + 1) * self.modes_per_label
    }

    pub fn label_of_mode(&self, mode: usize) -> usize {
        mode / self.modes_per_label
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Counterclockwise,
    Clockwise,
}

impl Direction {
    pub fn sign(self) -> f64 {
        match self {
            Direction::Counterclockwise => 1.0,
            Direction::Clockwise => -1.0,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Direction::Counterclockwise => 0,
            Direction::Clockwise => 1,
        }
    }
}

/// Points on a circle: `context_len` observations at a resting angle, then
/// `horizon` steps moving clockwise or counterclockwise with equal odds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySpec {
    pub context_len: usize,
    pub horizon: usize,
    pub radius: f64,
    pub angular_step: f64,
    pub noise_std: f64,
}

impl Default for TrajectorySpec {
    fn default() -> Self {
        Self {
            context_len: 2,
            horizon: 10,
            radius: 1.0,
            angular_step: 0.25,
            noise_std: 0.02,
        }
    }
}

impl TrajectorySpec {
    pub fn validate(&self) -> Result<()> {
        if self.context_len == 0 || self.horizon == 0 || !(self.radius > 0.0) || !(self.noise_std >= 0.0) {
            return Err(Error::Config(format!("invalid trajectory spec: {self:?}")));
        }
        Ok(())
    }

    /// Noise-free future points for a start angle and direction, flattened `[x0, y0, x1, ...]`.
    pub fn noiseless_future(&self, start_angle: f64, dir: Direction) -> Vec<f64> {
        (1..=self.horizon)
            .flat_map(|k| {
                let a = start_angle + dir.sign() * k as f64 * self.angular_step;
                [self.radius * a.cos(), self.radius * a.sin()]
            })
            .collect()
    }
}

/// Conditions (one-hot labels or flattened contexts; absent when
/// unconditional), targets, and the integer label behind each row.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledBatch {
    pub condition: Option<Tensor>,
    pub target: Tensor,
    pub labels: Vec<usize>,
}

impl LabeledBatch {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Writes `label?,y0,y1,...` rows; the label column is present for conditional batches.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let d = self.target.cols();
        let mut header: Vec<String> = Vec::new();
        if self.condition.is_some() {
            header.push("label".into());
        }
        header.extend((0..d).map(|j| format!("y{j}")));
        writeln!(out, "{}", header.join(","))?;
        for i in 0..self.len() {
            let mut cells: Vec<String> = Vec::new();
            if self.condition.is_some() {
                cells.push(self.labels[i].to_string());
            }
            cells.extend(self.target.row(i).iter().map(|v| v.to_string()));
            writeln!(out, "{}", cells.join(","))?;
        }
        Ok(())
    }
}

fn gauss(rng: &mut Rng) -> f64 {
    rng.sample(StandardNormal)
}

pub fn one_hot(labels: &[usize], n_labels: usize) -> Tensor {
    let mut t = Tensor::zeros(&[labels.len(), n_labels]);
    for (i, &l) in labels.iter().enumerate() {
        t.data_mut()[i * n_labels + l] = 1.0;
    }
    t
}

fn sample_mode_points(spec: &RingMixtureSpec, modes: &[usize], rng: &mut Rng) -> Tensor {
    let mut data = Vec::with_capacity(2 * modes.len());
    for &k in modes {
        let [cx, cy] = spec.center(k);
        data.push(cx + spec.std * gauss(rng));
        data.push(cy + spec.std * gauss(rng));
    }
    Tensor::matrix(modes.len(), 2, data).expect("2 values per mode")
}

/// `n` ring samples as `[n, 2]` together with the mode each came from.
pub fn sample_ring_labeled(spec: &RingMixtureSpec, n: usize, rng: &mut Rng) -> (Tensor, Vec<usize>) {
    let modes: Vec<usize> = (0..n).map(|_| rng.random_range(0..spec.n_modes)).collect();
    (sample_mode_points(spec, &modes, rng), modes)
}

pub fn sample_ring(spec: &RingMixtureSpec, n: usize, rng: &mut Rng) -> Tensor {
    sample_ring_labeled(spec, n, rng).0
}

pub fn sample_conditional_ring(spec: &ConditionalRingSpec, n: usize, rng: &mut Rng) -> LabeledBatch {
    let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..spec.n_labels)).collect();
    let modes: Vec<usize> = labels
        .iter()
        .map(|&l| spec.owned_modes(l).start + rng.random_range(0..spec.modes_per_label))
        .collect();
    LabeledBatch {
        condition: Some(one_hot(&labels, spec.n_labels)),
        target: sample_mode_points(&spec.base, &modes, rng),
        labels,
    }
}

/// Conditional samples for fixed labels (one row per entry of `labels`).
pub fn sample_conditional_ring_for(spec: &ConditionalRingSpec, labels: &[usize], rng: &mut Rng) -> LabeledBatch {
    let modes: Vec<usize> = labels
        .iter()
        .map(|&l| spec.owned_modes(l).start + rng.random_range(0..spec.modes_per_label))
        .collect();
    LabeledBatch {
        condition: Some(one_hot(labels, spec.n_labels)),
        target: sample_mode_points(&spec.base, &modes, rng),
        labels: labels.to_vec(),
    }
}

/// One trajectory: flattened context, flattened future.
pub fn trajectory_from(spec: &TrajectorySpec, start_angle: f64, dir: Direction, rng: &mut Rng) -> (Vec<f64>, Vec<f64>) {
    let point = |a: f64, rng: &mut Rng| {
        [
            spec.radius * a.cos() + spec.noise_std * gauss(rng),
            spec.radius * a.sin() + spec.noise_std * gauss(rng),
        ]
    };
    let context = (0..spec.context_len).flat_map(|_| point(start_angle, rng)).collect();
    let future = (1..=spec.horizon)
        .flat_map(|k| point(start_angle + dir.sign() * k as f64 * spec.angular_step, rng))
        .collect();
    (context, future)
}

pub fn sample_trajectories(spec: &TrajectorySpec, n: usize, rng: &mut Rng) -> LabeledBatch {
    let mut ctx = Vec::with_capacity(n * 2 * spec.context_len);
    let mut fut = Vec::with_capacity(n * 2 * spec.horizon);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let start = rng.random_range(0.0..2.0 * PI);
        let dir = if rng.random_bool(0.5) {
            Direction::Clockwise
        } else {
            Direction::Counterclockwise
        };
        let (c, f) = trajectory_from(spec, start, dir, rng);
        ctx.extend(c);
        fut.extend(f);
        labels.push(dir.index());
    }
    LabeledBatch {
        condition: Some(Tensor::matrix(n, 2 * spec.context_len, ctx).expect("context size")),
        target: Tensor::matrix(n, 2 * spec.horizon, fut).expect("future size"),
        labels,
    }
}

/// Closest mode centre under l2; ties go to the smallest index.
pub fn nearest_mode(point: [f64; 2], spec: &RingMixtureSpec) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for k in 0..spec.n_modes {
        let [cx, cy] = spec.center(k);
        let d = ((point[0] - cx).powi(2) + (point[1] - cy).powi(2)).sqrt();
        if d < best.1 {
            best = (k, d);
        }
    }
    best
}

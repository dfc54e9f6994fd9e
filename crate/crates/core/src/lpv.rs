//! Affine LPV plants, affine gains, scheduling and simulation.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Gamma, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{dim_check, Error, Result};
use crate::io;
use crate::seeds;

/// A scheduling vector `p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SchedulingPoint(pub Vec<f64>);

impl SchedulingPoint {
    pub fn new(p: Vec<f64>) -> Result<Self> {
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("scheduling point has non-finite entries".into()));
        }
        Ok(Self(p))
    }

    pub fn zeros(n_p: usize) -> Self {
        Self(vec![0.0; n_p])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn norm_squared(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchedulingPolytope {
    vertices: Vec<SchedulingPoint>,
}

impl SchedulingPolytope {
    pub fn new(vertices: Vec<SchedulingPoint>) -> Result<Self> {
        let Some(first) = vertices.first() else {
            return Err(Error::InvalidArgument("polytope needs at least one vertex".into()));
        };
        let n_p = first.len();
        dim_check(vertices.iter().all(|v| v.len() == n_p), || {
            "polytope vertices have different lengths".into()
        })?;
        Ok(Self { vertices })
    }

    /// The box `[-δ₁, δ₁] × … × [-δ_n, δ_n]`, vertices in binary order.
    pub fn symmetric_box(half_widths: &[f64]) -> Result<Self> {
        if half_widths.iter().any(|d| !(*d >= 0.0 && d.is_finite())) {
            return Err(Error::InvalidArgument("box half-widths must be finite and non-negative".into()));
        }
        let n = half_widths.len();
        let vertices = (0..1usize << n)
            .map(|mask| {
                SchedulingPoint(
                    (0..n)
                        .map(|i| if mask >> (n - 1 - i) & 1 == 1 { half_widths[i] } else { -half_widths[i] })
                        .collect(),
                )
            })
            .collect();
        Self::new(vertices)
    }

    pub fn vertices(&self) -> &[SchedulingPoint] {
        &self.vertices
    }

    pub fn n_p(&self) -> usize {
        self.vertices[0].len()
    }

    /// Random convex combination of the vertices with flat Dirichlet weights.
    pub fn sample_interior<R: Rng>(&self, rng: &mut R) -> SchedulingPoint {
        let gamma = Gamma::new(1.0, 1.0).expect("valid gamma parameters");
        let w: Vec<f64> = self.vertices.iter().map(|_| gamma.sample(rng)).collect();
        let total: f64 = w.iter().sum();
        let mut p = vec![0.0; self.n_p()];
        for (v, wi) in self.vertices.iter().zip(&w) {
            for (pj, vj) in p.iter_mut().zip(&v.0) {
                *pj += wi / total * vj;
            }
        }
        SchedulingPoint(p)
    }

    /// Convex-hull membership via non-negative least squares on the
    /// weighted system `[V; w·1ᵀ] λ = [q; w]`.
    pub fn contains(&self, q: &SchedulingPoint, tol: f64) -> bool {
        if q.len() != self.n_p() {
            return false;
        }
        let n_v = self.vertices.len();
        let scale = 1.0
            + self
                .vertices
                .iter()
                .flat_map(|v| v.0.iter())
                .chain(q.0.iter())
                .fold(0.0_f64, |a, v| a.max(v.abs()));
        let w = scale;
        let mut a = DMatrix::zeros(self.n_p() + 1, n_v);
        for (j, v) in self.vertices.iter().enumerate() {
            for i in 0..self.n_p() {
                a[(i, j)] = v.0[i];
            }
            a[(self.n_p(), j)] = w;
        }
        let mut b = DVector::from_column_slice(&q.0).push(w);
        b[self.n_p()] = w;
        let lambda = nnls(&a, &b);
        (&a * lambda - b).norm() <= tol * scale
    }
}

/// Lawson–Hanson active-set non-negative least squares.
fn nnls(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let n = a.ncols();
    let mut x = DVector::zeros(n);
    let mut passive = vec![false; n];
    let tol = 1e-12 * (1.0 + a.norm() * b.norm());
    for _ in 0..3 * n + 10 {
        let grad = a.transpose() * (b - a * &x);
        let Some((j, g)) = (0..n)
            .filter(|j| !passive[*j])
            .map(|j| (j, grad[j]))
            .max_by(|l, r| l.1.total_cmp(&r.1))
        else {
            break;
        };
        if g <= tol {
            break;
        }
        passive[j] = true;
        loop {
            let idx: Vec<usize> = (0..n).filter(|k| passive[*k]).collect();
            let sub = a.select_columns(&idx);
            let Some(z_sub) = sub.clone().svd(true, true).solve(b, 1e-14).ok() else {
                return x;
            };
            if z_sub.iter().all(|v| *v > 0.0) {
                for (k, &i) in idx.iter().enumerate() {
                    x[i] = z_sub[k];
                }
                break;
            }
            let mut step = 1.0_f64;
            for (k, &i) in idx.iter().enumerate() {
                if z_sub[k] <= 0.0 {
                    step = step.min(x[i] / (x[i] - z_sub[k]));
                }
            }
            for (k, &i) in idx.iter().enumerate() {
                x[i] += step * (z_sub[k] - x[i]);
                if x[i] <= 1e-15 {
                    x[i] = 0.0;
                    passive[i] = false;
                }
            }
            if !idx.iter().any(|i| passive[*i]) {
                break;
            }
        }
    }
    x
}

/// `A(p) = A₀ + Σ pᵢAᵢ`, constant `B`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpvPlant {
    #[serde(with = "io::vec_matrix")]
    a: Vec<DMatrix<f64>>,
    #[serde(with = "io::matrix")]
    b: DMatrix<f64>,
}

impl LpvPlant {
    pub fn new(a: Vec<DMatrix<f64>>, b: DMatrix<f64>) -> Result<Self> {
        let Some(a0) = a.first() else {
            return Err(Error::InvalidArgument("plant needs at least A₀".into()));
        };
        let n_x = a0.nrows();
        dim_check(a.iter().all(|m| m.shape() == (n_x, n_x)), || {
            format!("all A_i must be {n_x}x{n_x}")
        })?;
        dim_check(b.nrows() == n_x, || format!("B must have {n_x} rows, has {}", b.nrows()))?;
        Ok(Self { a, b })
    }

    /// Splits the stacked `[𝒜 B]` (n_x × (n_x(1+n_p) + n_u)).
    pub fn from_stacked(ab: &DMatrix<f64>, n_x: usize, n_p: usize) -> Result<Self> {
        let n = n_x * (1 + n_p);
        dim_check(ab.nrows() == n_x && ab.ncols() >= n, || {
            format!("stacked [A B] has shape {:?}", ab.shape())
        })?;
        let a = (0..=n_p).map(|i| ab.columns(i * n_x, n_x).into_owned()).collect();
        Self::new(a, ab.columns(n, ab.ncols() - n).into_owned())
    }

    pub fn n_x(&self) -> usize {
        self.b.nrows()
    }

    pub fn n_u(&self) -> usize {
        self.b.ncols()
    }

    pub fn n_p(&self) -> usize {
        self.a.len() - 1
    }

    pub fn a(&self) -> &[DMatrix<f64>] {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    /// `𝒜 = [A₀ … A_{n_p}]`.
    pub fn stacked_a(&self) -> DMatrix<f64> {
        hstack(&self.a, self.n_x())
    }

    /// `[𝒜 B]`.
    pub fn stacked(&self) -> DMatrix<f64> {
        let a = self.stacked_a();
        let mut out = DMatrix::zeros(self.n_x(), a.ncols() + self.n_u());
        out.columns_mut(0, a.ncols()).copy_from(&a);
        out.columns_mut(a.ncols(), self.n_u()).copy_from(&self.b);
        out
    }
}

/// `𝒦 = [K₀ … K_{n_p}]`, giving `u = 𝒦 L_p x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineGain {
    #[serde(with = "io::vec_matrix")]
    k: Vec<DMatrix<f64>>,
}

impl AffineGain {
    pub fn new(k: Vec<DMatrix<f64>>) -> Result<Self> {
        let Some(k0) = k.first() else {
            return Err(Error::InvalidArgument("gain needs at least K₀".into()));
        };
        let shape = k0.shape();
        dim_check(k.iter().all(|m| m.shape() == shape), || "all K_i must share one shape".into())?;
        Ok(Self { k })
    }

    pub fn zeros(n_u: usize, n_x: usize, n_p: usize) -> Self {
        Self {
            k: vec![DMatrix::zeros(n_u, n_x); n_p + 1],
        }
    }

    pub fn from_stacked(k: &DMatrix<f64>, n_x: usize) -> Result<Self> {
        dim_check(n_x > 0 && k.ncols() % n_x == 0, || {
            format!("stacked gain with {} columns is not a multiple of n_x = {n_x}", k.ncols())
        })?;
        Self::new((0..k.ncols() / n_x).map(|i| k.columns(i * n_x, n_x).into_owned()).collect())
    }

    pub fn blocks(&self) -> &[DMatrix<f64>] {
        &self.k
    }

    pub fn n_u(&self) -> usize {
        self.k[0].nrows()
    }

    pub fn n_x(&self) -> usize {
        self.k[0].ncols()
    }

    pub fn n_p(&self) -> usize {
        self.k.len() - 1
    }

    pub fn stacked(&self) -> DMatrix<f64> {
        hstack(&self.k, self.n_u())
    }

    /// `K(p) = K₀ + Σ pᵢKᵢ`.
    pub fn eval(&self, p: &SchedulingPoint) -> Result<DMatrix<f64>> {
        dim_check(p.len() == self.n_p(), || format!("gain expects n_p = {}, got {}", self.n_p(), p.len()))?;
        let mut out = self.k[0].clone();
        for (pi, ki) in p.0.iter().zip(&self.k[1..]) {
            out += ki * *pi;
        }
        Ok(out)
    }
}

fn hstack(blocks: &[DMatrix<f64>], rows: usize) -> DMatrix<f64> {
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut c = 0;
    for b in blocks {
        out.columns_mut(c, b.ncols()).copy_from(b);
        c += b.ncols();
    }
    out
}

/// `L_p = [1; p] ⊗ I_{n_x}`.
pub fn lift_scheduling(p: &SchedulingPoint, n_x: usize) -> DMatrix<f64> {
    let mut col = Vec::with_capacity(p.len() + 1);
    col.push(1.0);
    col.extend_from_slice(&p.0);
    DMatrix::from_column_slice(p.len() + 1, 1, &col).kronecker(&DMatrix::identity(n_x, n_x))
}

/// `A(p) = A₀ + Σ pᵢAᵢ`.
pub fn eval_a(plant: &LpvPlant, p: &SchedulingPoint) -> Result<DMatrix<f64>> {
    dim_check(p.len() == plant.n_p(), || format!("plant expects n_p = {}, got {}", plant.n_p(), p.len()))?;
    let mut out = plant.a[0].clone();
    for (pi, ai) in p.0.iter().zip(&plant.a[1..]) {
        out += ai * *pi;
    }
    Ok(out)
}

/// `𝒜 + B𝒦`; compose with [`lift_scheduling`] for the state map.
pub fn closed_loop_matrix(plant: &LpvPlant, gain: &AffineGain) -> Result<DMatrix<f64>> {
    dim_check(
        gain.n_u() == plant.n_u() && gain.n_x() == plant.n_x() && gain.n_p() == plant.n_p(),
        || "gain and plant dimensions differ".into(),
    )?;
    Ok(plant.stacked_a() + plant.b() * gain.stacked())
}

type MapFn = Arc<dyn Fn(&DVector<f64>) -> Vec<f64> + Send + Sync>;

/// How `p_k` is produced.
#[derive(Clone)]
pub enum SchedulingMap {
    /// `ψ(x) = [δ sin x₁, δ cos x₂]`.
    Example { delta: f64 },
    /// Endogenous `p_k = ψ(x_k)` for a user map with output length `n_p`.
    Custom { n_p: usize, map: MapFn },
    /// Pre-recorded sequence, indexed by step.
    Exogenous(Vec<SchedulingPoint>),
}

impl fmt::Debug for SchedulingMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SchedulingMap::Example { delta } => write!(f, "Example {{ delta: {delta} }}"),
            SchedulingMap::Custom { n_p, .. } => write!(f, "Custom {{ n_p: {n_p} }}"),
            SchedulingMap::Exogenous(seq) => write!(f, "Exogenous({} points)", seq.len()),
        }
    }
}

impl SchedulingMap {
    pub fn custom(n_p: usize, map: impl Fn(&DVector<f64>) -> Vec<f64> + Send + Sync + 'static) -> Self {
        SchedulingMap::Custom { n_p, map: Arc::new(map) }
    }

    pub fn n_p(&self) -> usize {
        match self {
            SchedulingMap::Example { .. } => 2,
            SchedulingMap::Custom { n_p, .. } => *n_p,
            SchedulingMap::Exogenous(seq) => seq.first().map_or(0, |p| p.len()),
        }
    }

    pub fn eval(&self, k: usize, x: &DVector<f64>) -> Result<SchedulingPoint> {
        let p = match self {
            SchedulingMap::Example { delta } => {
                dim_check(x.len() >= 2, || "example scheduling map needs n_x ≥ 2".into())?;
                vec![delta * x[0].sin(), delta * x[1].cos()]
            }
            SchedulingMap::Custom { n_p, map } => {
                let p = map(x);
                dim_check(p.len() == *n_p, || format!("scheduling map returned {} entries, expected {n_p}", p.len()))?;
                p
            }
            SchedulingMap::Exogenous(seq) => seq
                .get(k)
                .ok_or_else(|| Error::InvalidArgument(format!("exogenous scheduling has no sample for step {k}")))?
                .0
                .clone(),
        };
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { step: k });
        }
        Ok(SchedulingPoint(p))
    }
}

/// Disturbance generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DisturbanceSource {
    Zero,
    /// Independent `𝒰(−w_max, w_max)` entries.
    Uniform { w_max: f64, seed: u64 },
    Replay {
        #[serde(with = "io::vec_vector")]
        samples: Vec<DVector<f64>>,
    },
}

/// Open-loop input generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InputSource {
    Zero,
    /// Independent `𝒩(0, variance)` entries.
    Gaussian { variance: f64, seed: u64 },
    Replay {
        #[serde(with = "io::vec_vector")]
        samples: Vec<DVector<f64>>,
    },
}

fn replay(samples: &[DVector<f64>], dim: usize, n: usize, what: &str) -> Result<Vec<DVector<f64>>> {
    dim_check(samples.len() >= n, || format!("{what} replay has {} samples, need {n}", samples.len()))?;
    dim_check(samples.iter().all(|s| s.len() == dim), || format!("{what} replay samples must have length {dim}"))?;
    Ok(samples[..n].to_vec())
}

impl DisturbanceSource {
    pub fn sequence(&self, n_x: usize, n: usize) -> Result<Vec<DVector<f64>>> {
        match self {
            DisturbanceSource::Zero => Ok(vec![DVector::zeros(n_x); n]),
            DisturbanceSource::Uniform { w_max, seed } => {
                if !(*w_max >= 0.0 && w_max.is_finite()) {
                    return Err(Error::InvalidArgument("w_max must be finite and non-negative".into()));
                }
                if *w_max == 0.0 {
                    return Ok(vec![DVector::zeros(n_x); n]);
                }
                let mut rng = seeds::rng(*seed, "disturbance", 0);
                let dist = Uniform::new_inclusive(-w_max, *w_max).expect("valid bounds");
                Ok((0..n).map(|_| DVector::from_fn(n_x, |_, _| dist.sample(&mut rng))).collect())
            }
            DisturbanceSource::Replay { samples } => replay(samples, n_x, n, "disturbance"),
        }
    }
}

impl InputSource {
    pub fn sequence(&self, n_u: usize, n: usize) -> Result<Vec<DVector<f64>>> {
        match self {
            InputSource::Zero => Ok(vec![DVector::zeros(n_u); n]),
            InputSource::Gaussian { variance, seed } => {
                let normal = Normal::new(0.0, variance.sqrt())
                    .map_err(|e| Error::InvalidArgument(format!("input variance: {e}")))?;
                let mut rng = seeds::rng(*seed, "input", 0);
                Ok((0..n).map(|_| DVector::from_fn(n_u, |_, _| normal.sample(&mut rng))).collect())
            }
            InputSource::Replay { samples } => replay(samples, n_u, n, "input"),
        }
    }
}

/// Input law for [`simulate`].
#[derive(Debug, Clone, Copy)]
pub enum Control<'a> {
    OpenLoop(&'a InputSource),
    Gain(&'a AffineGain),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    #[serde(with = "io::vec_vector")]
    pub x: Vec<DVector<f64>>,
    #[serde(with = "io::vec_vector")]
    pub u: Vec<DVector<f64>>,
    pub p: Vec<SchedulingPoint>,
    #[serde(with = "io::vec_vector")]
    pub w: Vec<DVector<f64>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    pub fn check(&self) -> Result<()> {
        let n = self.u.len();
        dim_check(self.x.len() == n + 1 && self.p.len() == n && self.w.len() == n, || {
            format!(
                "trajectory lengths x={}, u={}, p={}, w={} are inconsistent",
                self.x.len(),
                n,
                self.p.len(),
                self.w.len()
            )
        })
    }

    /// CSV with header `k,x1..,u1..,p1..,w1..`; the last row only carries `k`
    /// and `x`.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        self.check()?;
        let n_x = self.x[0].len();
        let n_u = self.u.first().map_or(0, |u| u.len());
        let n_p = self.p.first().map_or(0, |p| p.len());
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["k".to_string()];
        header.extend((1..=n_x).map(|i| format!("x{i}")));
        header.extend((1..=n_u).map(|i| format!("u{i}")));
        header.extend((1..=n_p).map(|i| format!("p{i}")));
        header.extend((1..=n_x).map(|i| format!("w{i}")));
        w.write_record(&header)?;
        for k in 0..=self.len() {
            let mut row = vec![k.to_string()];
            row.extend(self.x[k].iter().map(|v| v.to_string()));
            if k < self.len() {
                row.extend(self.u[k].iter().map(|v| v.to_string()));
                row.extend(self.p[k].0.iter().map(|v| v.to_string()));
                row.extend(self.w[k].iter().map(|v| v.to_string()));
            } else {
                row.extend(std::iter::repeat_n(String::new(), n_u + n_p + n_x));
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Runs `x_{k+1} = A(p_k)x_k + Bu_k + w_k` for `n` steps with `p_k` evaluated
/// from `x_k` before the step.
pub fn simulate(
    plant: &LpvPlant,
    control: Control<'_>,
    scheduling: &SchedulingMap,
    noise: &DisturbanceSource,
    x0: &DVector<f64>,
    n: usize,
) -> Result<Trajectory> {
    if n == 0 {
        return Err(Error::InvalidArgument("simulation needs at least one step".into()));
    }
    dim_check(x0.len() == plant.n_x(), || format!("x0 has length {}, plant has n_x = {}", x0.len(), plant.n_x()))?;
    dim_check(scheduling.n_p() == plant.n_p(), || {
        format!("scheduling produces n_p = {}, plant expects {}", scheduling.n_p(), plant.n_p())
    })?;
    let w = noise.sequence(plant.n_x(), n)?;
    let open = match control {
        Control::OpenLoop(src) => Some(src.sequence(plant.n_u(), n)?),
        Control::Gain(g) => {
            dim_check(g.n_u() == plant.n_u() && g.n_x() == plant.n_x() && g.n_p() == plant.n_p(), || {
                "gain and plant dimensions differ".into()
            })?;
            None
        }
    };
    let mut x = Vec::with_capacity(n + 1);
    let mut u = Vec::with_capacity(n);
    let mut p = Vec::with_capacity(n);
    x.push(x0.clone());
    for k in 0..n {
        let xk = &x[k];
        let pk = scheduling.eval(k, xk)?;
        let uk = match (&open, control) {
            (Some(seq), _) => seq[k].clone(),
            (None, Control::Gain(g)) => g.eval(&pk)? * xk,
            (None, Control::OpenLoop(_)) => unreachable!(),
        };
        let next = eval_a(plant, &pk)? * xk + plant.b() * &uk + &w[k];
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { step: k + 1 });
        }
        x.push(next);
        u.push(uk);
        p.push(pk);
    }
    Ok(Trajectory { x, u, p, w })
}

/// The two-state example plant, its scheduling map and `[−δ, δ]²`.
pub fn example_plant(delta: f64) -> Result<(LpvPlant, SchedulingMap, SchedulingPolytope)> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::InvalidArgument(format!("δ must be positive, got {delta}")));
    }
    let a0 = DMatrix::from_row_slice(2, 2, &[0.027, -0.138, 0.380, 0.014]);
    let a1 = DMatrix::from_row_slice(2, 2, &[0.449, -0.164, 0.129, -0.257]);
    let a2 = DMatrix::from_row_slice(2, 2, &[-0.265, -0.332, -0.090, -0.059]);
    let b = DMatrix::from_row_slice(2, 2, &[0.309, 0.539, -0.570, 0.467]);
    let plant = LpvPlant::new(vec![a0, a1, a2], b)?;
    Ok((
        plant,
        SchedulingMap::Example { delta },
        SchedulingPolytope::symmetric_box(&[delta, delta])?,
    ))
}

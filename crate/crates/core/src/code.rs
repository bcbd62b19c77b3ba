//! Generalized PolyDot encoding.
//!
//! `W` is split into an `m x n` block grid, the feedforward input into an
//! `n x d1` grid and the backprop input `Delta^T` into a `d2 x m` grid. Each
//! worker `p` owns one base point `t_p`, and the three code variables are
//! powers of it, so every encoded product is a univariate polynomial in
//! `t_p` whose coefficients the decoder recovers.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::matrix::{block_partition, eval_block_poly, Mat};

/// Which variable is tied to the other two.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Substitution {
    /// `a = b^n`, `c = b^(mn)`: cheaper feedforward.
    UEqVn,
    /// `b = a^m`, `c = a^(mn)`: cheaper backprop.
    VEqUm,
}

impl Substitution {
    pub fn name(self) -> &'static str {
        match self {
            Substitution::UEqVn => "uvn",
            Substitution::VEqUm => "vum",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "uvn" | "u_eq_vn" | "u=vn" => Some(Substitution::UEqVn),
            "vum" | "v_eq_um" | "v=um" => Some(Substitution::VEqUm),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CodeParams {
    pub m: usize,
    pub n: usize,
    pub d1: usize,
    pub d2: usize,
    pub workers: usize,
    pub substitution: Substitution,
    base_points: Vec<f64>,
}

/// Chebyshev nodes on (-1, 1); a node at zero is moved halfway to its
/// neighbour.
pub fn chebyshev_points(p: usize) -> Vec<f64> {
    let mut pts: Vec<f64> = (0..p)
        .map(|i| (PI * (2 * i + 1) as f64 / (2 * p) as f64).cos())
        .collect();
    for i in 0..p {
        if pts[i].abs() < 1e-12 {
            let nb = if i > 0 {
                pts[i - 1]
            } else {
                pts.get(1).copied().unwrap_or(1.0)
            };
            pts[i] = nb / 2.0;
        }
    }
    pts
}

pub fn make_params(
    m: usize,
    n: usize,
    d1: usize,
    d2: usize,
    workers: usize,
    substitution: Substitution,
) -> Result<CodeParams> {
    CodeParams::with_base_points(m, n, d1, d2, substitution, chebyshev_points(workers))
}

impl CodeParams {
    /// Uses caller-supplied base points instead of the Chebyshev default.
    pub fn with_base_points(
        m: usize,
        n: usize,
        d1: usize,
        d2: usize,
        substitution: Substitution,
        base_points: Vec<f64>,
    ) -> Result<Self> {
        if m == 0 || n == 0 || d1 == 0 || d2 == 0 {
            return Err(Error::InvalidParams(format!(
                "m={m}, n={n}, d1={d1}, d2={d2} must all be positive"
            )));
        }
        let workers = base_points.len();
        let d = d1.max(d2);
        let need = match substitution {
            Substitution::UEqVn => recovery_threshold_mm(m, n, d),
            Substitution::VEqUm => m * n * d + m - 1,
        };
        if workers < need {
            return Err(Error::InsufficientWorkers {
                need,
                have: workers,
            });
        }
        if let Some(i) = base_points.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        let mut sorted = base_points.clone();
        sorted.sort_by(f64::total_cmp);
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::DegenerateCode);
        }
        Ok(Self {
            m,
            n,
            d1,
            d2,
            workers,
            substitution,
            base_points,
        })
    }

    pub fn base_points(&self) -> &[f64] {
        &self.base_points
    }

    pub fn base_point(&self, p: usize) -> f64 {
        self.base_points[p]
    }

    /// Exponents of the base point standing in for `a`, `b` and `c`.
    pub fn var_exponents(&self) -> (usize, usize, usize) {
        let (m, n) = (self.m, self.n);
        match self.substitution {
            Substitution::UEqVn => (n, 1, m * n),
            Substitution::VEqUm => (1, m, m * n),
        }
    }

    pub fn a_point(&self, p: usize) -> f64 {
        self.base_points[p].powi(self.var_exponents().0 as i32)
    }

    pub fn b_point(&self, p: usize) -> f64 {
        self.base_points[p].powi(self.var_exponents().1 as i32)
    }

    pub fn c_point(&self, p: usize) -> f64 {
        self.base_points[p].powi(self.var_exponents().2 as i32)
    }

    /// Exponent of `t` carried by weight block `W_ij`, i.e. `a^i b^j`.
    pub fn weight_exponent(&self, i: usize, j: usize) -> usize {
        let (ea, eb, _) = self.var_exponents();
        ea * i + eb * j
    }

    fn ff_input_exponent(&self, j: usize, k: usize) -> usize {
        let (_, eb, ec) = self.var_exponents();
        eb * (self.n - 1 - j) + ec * k
    }

    fn bp_input_exponent(&self, k: usize, i: usize) -> usize {
        let (ea, _, ec) = self.var_exponents();
        ec * k + ea * (self.m - 1 - i)
    }

    pub fn ff_unknowns(&self) -> usize {
        ff_unknowns(self.m, self.n, self.d1, self.substitution)
    }

    pub fn bp_unknowns(&self) -> usize {
        bp_unknowns(self.m, self.n, self.d2, self.substitution)
    }

    /// Exponent of `S_ik = sum_j W_ij X_jk` in the feedforward product.
    pub fn target_exponents_ff(&self) -> BTreeMap<(usize, usize), usize> {
        let mut out = BTreeMap::new();
        for i in 0..self.m {
            for k in 0..self.d1 {
                out.insert(
                    (i, k),
                    self.weight_exponent(i, self.n - 1) + self.ff_input_exponent(self.n - 1, k),
                );
            }
        }
        out
    }

    /// Exponent of `C^T_kj = sum_i Delta^T_ki W_ij` in the backprop product.
    pub fn target_exponents_bp(&self) -> BTreeMap<(usize, usize), usize> {
        let mut out = BTreeMap::new();
        for k in 0..self.d2 {
            for j in 0..self.n {
                out.insert(
                    (k, j),
                    self.bp_input_exponent(k, self.m - 1) + self.weight_exponent(self.m - 1, j),
                );
            }
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Thresholds
// ---------------------------------------------------------------------------

/// Number of polynomial coefficients in the encoded feedforward product.
pub fn ff_unknowns(m: usize, n: usize, d1: usize, sub: Substitution) -> usize {
    match sub {
        Substitution::UEqVn => m * n * d1 + n - 1,
        Substitution::VEqUm => m * n * d1 + m * n - m,
    }
}

/// Number of polynomial coefficients in the encoded backprop product.
pub fn bp_unknowns(m: usize, n: usize, d2: usize, sub: Substitution) -> usize {
    match sub {
        Substitution::UEqVn => m * n * d2 + m * n - n,
        Substitution::VEqUm => m * n * d2 + m - 1,
    }
}

pub fn recovery_threshold_mv(m: usize, n: usize) -> usize {
    m * n + n - 1
}

pub fn recovery_threshold_mm(m: usize, n: usize, d: usize) -> usize {
    m * n * d + n - 1
}

/// Unknowns of the PolyDot code with independent variables, `m(2n-1)d`.
pub fn polydot_unknowns(m: usize, n: usize, d: usize) -> usize {
    m * (2 * n - 1) * d
}

pub fn polynomial_threshold(k: usize, k_prime: usize) -> usize {
    k * k_prime
}

pub fn matdot_threshold(k: usize) -> usize {
    2 * k - 1
}

// ---------------------------------------------------------------------------
// Shards and encoders
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShardKind {
    Weight,
    FeedforwardInput,
    BackpropInput,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Shard {
    pub worker: usize,
    pub payload: Mat,
    pub kind: ShardKind,
}

fn check_worker(params: &CodeParams, p: usize) -> Result<()> {
    if p >= params.workers {
        return Err(Error::InvalidParams(format!(
            "worker {p} out of range for {} workers",
            params.workers
        )));
    }
    Ok(())
}

fn encode_grid(
    a: &Mat,
    rows: usize,
    cols: usize,
    point: f64,
    exponent: impl Fn(usize, usize) -> usize,
) -> Result<Mat> {
    let grid = block_partition(a, rows, cols)?;
    let terms: Vec<(&Mat, usize)> = grid.iter().map(|((i, j), b)| (b, exponent(i, j))).collect();
    eval_block_poly(&terms, point)
}

/// `sum_ij W_ij a_p^i b_p^j`, of shape `N1/m x N0/n`.
pub fn encode_weight_shard(w: &Mat, params: &CodeParams, p: usize) -> Result<Shard> {
    check_worker(params, p)?;
    let payload = encode_grid(w, params.m, params.n, params.base_point(p), |i, j| {
        params.weight_exponent(i, j)
    })?;
    Ok(Shard {
        worker: p,
        payload,
        kind: ShardKind::Weight,
    })
}

/// `sum_jk X_jk b_p^(n-1-j) c_p^k`, of shape `N0/n x B/d1`.
pub fn encode_input_ff(x: &Mat, params: &CodeParams, p: usize) -> Result<Shard> {
    check_worker(params, p)?;
    let payload = encode_grid(x, params.n, params.d1, params.base_point(p), |j, k| {
        params.ff_input_exponent(j, k)
    })?;
    Ok(Shard {
        worker: p,
        payload,
        kind: ShardKind::FeedforwardInput,
    })
}

/// `sum_ki Dt_ki c_p^k a_p^(m-1-i)` for `Dt = Delta^T`, of shape `B/d2 x N1/m`.
pub fn encode_input_bp(delta_t: &Mat, params: &CodeParams, p: usize) -> Result<Shard> {
    check_worker(params, p)?;
    let payload = encode_grid(
        delta_t,
        params.d2,
        params.m,
        params.base_point(p),
        |k, i| params.bp_input_exponent(k, i),
    )?;
    Ok(Shard {
        worker: p,
        payload,
        kind: ShardKind::BackpropInput,
    })
}

/// Row blocks of `delta` weighted by `a_p^i`; the left factor of a coded update.
pub fn encode_update_left(delta: &Mat, params: &CodeParams, p: usize) -> Result<Mat> {
    let (ea, _, _) = params.var_exponents();
    encode_grid(delta, params.m, 1, params.base_point(p), |i, _| ea * i)
}

/// Row blocks of `x` weighted by `b_p^j`; the right factor of a coded update.
pub fn encode_update_right(x: &Mat, params: &CodeParams, p: usize) -> Result<Mat> {
    let (_, eb, _) = params.var_exponents();
    encode_grid(x, params.n, 1, params.base_point(p), |j, _| eb * j)
}

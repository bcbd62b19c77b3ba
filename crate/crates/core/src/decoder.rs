//! Real-number MDS decoding with error location by support search.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::linalg::{left_null_space, lstsq};
use crate::matrix::Mat;

/// Syndrome max-norm relative to `||z||_inf` under which a word counts as clean.
pub const TAU_ZERO: f64 = 1e-8;
/// Least-squares residual relative to `||s||_2` under which a support is accepted.
pub const TAU_FIT: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DecodeMode {
    /// Unbounded errors: correct up to `floor((P - Q) / 2)`.
    Adversarial,
    /// Generic continuous errors: correct up to `P - Q - 1`.
    Probabilistic,
}

impl DecodeMode {
    pub fn capacity(self, p: usize, q: usize) -> usize {
        let r = p.saturating_sub(q);
        match self {
            DecodeMode::Adversarial => r / 2,
            DecodeMode::Probabilistic => r.saturating_sub(1),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DecodeMode::Adversarial => "adversarial",
            DecodeMode::Probabilistic => "probabilistic",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "adversarial" | "model1" | "1" => Some(DecodeMode::Adversarial),
            "probabilistic" | "model2" | "2" => Some(DecodeMode::Probabilistic),
            _ => None,
        }
    }
}

/// A `(P, Q)` linear code given by its `P x Q` generator.
#[derive(Debug, Clone)]
pub struct LinearCode {
    generator: Mat,
    parity_check: Mat,
}

impl LinearCode {
    pub fn from_generator(generator: Mat) -> Result<Self> {
        let (p, q) = generator.shape();
        if p < q {
            return Err(Error::InsufficientEvaluations { need: q, have: p });
        }
        let parity_check = left_null_space(&generator)?;
        Ok(Self {
            generator,
            parity_check,
        })
    }

    pub fn len(&self) -> usize {
        self.generator.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.generator.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.generator.cols()
    }

    pub fn generator(&self) -> &Mat {
        &self.generator
    }

    pub fn parity_check(&self) -> &Mat {
        &self.parity_check
    }

    /// `G q`.
    pub fn encode(&self, message: &[f64]) -> Result<Vec<f64>> {
        Ok(self.generator.matmul(&Mat::column(message))?.into_vec())
    }

    /// The same code restricted to the listed rows.
    pub fn puncture(&self, keep: &[usize]) -> Result<LinearCode> {
        let g = Mat::from_fn(keep.len(), self.dim(), |i, j| {
            self.generator.get(keep[i], j)
        });
        LinearCode::from_generator(g)
    }
}

/// Vandermonde code: row `p` of the generator is `[1, x_p, ..., x_p^(Q-1)]`.
pub fn code_from_points(points: &[f64], q: usize) -> Result<LinearCode> {
    let mut sorted = points.to_vec();
    sorted.sort_by(f64::total_cmp);
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::DegenerateCode);
    }
    if points.len() < q {
        return Err(Error::InsufficientEvaluations {
            need: q,
            have: points.len(),
        });
    }
    LinearCode::from_generator(vandermonde(points, q))
}

pub fn vandermonde(points: &[f64], q: usize) -> Mat {
    let mut g = Mat::zeros(points.len(), q);
    for (r, &x) in points.iter().enumerate() {
        let mut v = 1.0;
        for c in 0..q {
            g.set(r, c, v);
            v *= x;
        }
    }
    g
}

#[derive(Debug, Clone, PartialEq)]
pub enum DecodeOutcome {
    NoErrors {
        message: Vec<f64>,
    },
    Corrected {
        message: Vec<f64>,
        error_vector: Vec<f64>,
        locations: BTreeSet<usize>,
    },
    Failure,
}

impl DecodeOutcome {
    pub fn message(&self) -> Option<&[f64]> {
        match self {
            DecodeOutcome::NoErrors { message } | DecodeOutcome::Corrected { message, .. } => {
                Some(message)
            }
            DecodeOutcome::Failure => None,
        }
    }

    pub fn locations(&self) -> BTreeSet<usize> {
        match self {
            DecodeOutcome::Corrected { locations, .. } => locations.clone(),
            _ => BTreeSet::new(),
        }
    }
}

fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Calls `f` on each `k`-subset of `0..p` in lexicographic order until it
/// returns `true`.
fn first_combination(p: usize, k: usize, mut f: impl FnMut(&[usize]) -> bool) -> bool {
    if k > p {
        return false;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        if f(&idx) {
            return true;
        }
        let mut i = k;
        loop {
            if i == 0 {
                return false;
            }
            i -= 1;
            if idx[i] < p - k + i {
                break;
            }
            if i == 0 {
                return false;
            }
        }
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Searches supports of growing size for one that explains the syndrome.
fn locate(code: &LinearCode, s: &[f64], mode: DecodeMode) -> Option<(Vec<usize>, Vec<f64>)> {
    let p = code.len();
    let h = code.parity_check();
    let cap = mode.capacity(p, code.dim());
    let tol = TAU_FIT * norm2(s);
    let rhs = Mat::column(s);
    let mut found = None;
    for k in 1..=cap {
        let hit = first_combination(p, k, |support| {
            let ha = Mat::from_fn(h.rows(), k, |i, j| h.get(i, support[j]));
            match lstsq(&ha, &rhs) {
                Ok((e, res)) if res[0] <= tol => {
                    found = Some((support.to_vec(), e.into_vec()));
                    true
                }
                _ => false,
            }
        });
        if hit {
            return found;
        }
    }
    None
}

fn solve_message(code: &LinearCode, z: &[f64], exclude: &BTreeSet<usize>) -> Result<Vec<f64>> {
    let keep: Vec<usize> = (0..code.len()).filter(|i| !exclude.contains(i)).collect();
    let g = Mat::from_fn(keep.len(), code.dim(), |i, j| {
        code.generator().get(keep[i], j)
    });
    let rhs = Mat::column(&keep.iter().map(|&i| z[i]).collect::<Vec<_>>());
    Ok(lstsq(&g, &rhs)?.0.into_vec())
}

/// Decodes one received word `z = G q + e`.
pub fn decode(code: &LinearCode, z: &[f64], mode: DecodeMode) -> Result<DecodeOutcome> {
    if z.len() != code.len() {
        return Err(Error::Dimension(format!(
            "received {} values for a length-{} code",
            z.len(),
            code.len()
        )));
    }
    let s = code.parity_check().matmul(&Mat::column(z))?.into_vec();
    if norm_inf(&s) <= TAU_ZERO * norm_inf(z) {
        return Ok(DecodeOutcome::NoErrors {
            message: solve_message(code, z, &BTreeSet::new())?,
        });
    }
    let Some((support, values)) = locate(code, &s, mode) else {
        return Ok(DecodeOutcome::Failure);
    };
    let locations: BTreeSet<usize> = support.iter().copied().collect();
    let mut error_vector = vec![0.0; code.len()];
    for (&i, &v) in support.iter().zip(&values) {
        error_vector[i] = v;
    }
    Ok(DecodeOutcome::Corrected {
        message: solve_message(code, z, &locations)?,
        error_vector,
        locations,
    })
}

/// Recovers the message from the surviving evaluations alone.
pub fn interpolate_erasures(code: &LinearCode, received: &[Option<f64>]) -> Result<Vec<f64>> {
    let keep: Vec<usize> = received
        .iter()
        .enumerate()
        .filter_map(|(i, v)| v.map(|_| i))
        .collect();
    if keep.len() < code.dim() {
        return Err(Error::InsufficientEvaluations {
            need: code.dim(),
            have: keep.len(),
        });
    }
    let z: Vec<f64> = received.iter().map(|v| v.unwrap_or(0.0)).collect();
    let erased: BTreeSet<usize> = (0..code.len()).filter(|i| received[*i].is_none()).collect();
    solve_message(code, &z, &erased)
}

// ---------------------------------------------------------------------------
// Block streams
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub enum StreamOutcome {
    NoErrors,
    Corrected { locations: BTreeSet<usize> },
    Failure,
}

impl StreamOutcome {
    pub fn locations(&self) -> BTreeSet<usize> {
        match self {
            StreamOutcome::Corrected { locations } => locations.clone(),
            _ => BTreeSet::new(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct StreamDecode {
    pub outcome: StreamOutcome,
    /// The `Q` coefficient blocks, absent on failure.
    pub blocks: Option<Vec<Mat>>,
}

/// Decodes `P` worker payloads (`None` marks an erasure) position by position.
///
/// Error locations found at each scalar position are pooled; the pooled set
/// must still fit the correction capacity of the surviving code, and the
/// coefficients are then refit on the untouched workers.
pub fn decode_block_stream(
    code: &LinearCode,
    payloads: &[Option<Mat>],
    mode: DecodeMode,
) -> Result<StreamDecode> {
    if payloads.len() != code.len() {
        return Err(Error::Dimension(format!(
            "{} payloads for a length-{} code",
            payloads.len(),
            code.len()
        )));
    }
    let alive: Vec<usize> = (0..code.len()).filter(|&i| payloads[i].is_some()).collect();
    if alive.len() < code.dim() {
        return Err(Error::InsufficientEvaluations {
            need: code.dim(),
            have: alive.len(),
        });
    }
    let shape = payloads[alive[0]]
        .as_ref()
        .map(|m| m.shape())
        .unwrap_or((0, 0));
    if alive
        .iter()
        .any(|&i| payloads[i].as_ref().map(|m| m.shape()) != Some(shape))
    {
        return Err(Error::Dimension("payload shapes differ".into()));
    }
    let sub = if alive.len() == code.len() {
        code.clone()
    } else {
        code.puncture(&alive)?
    };
    let cap = mode.capacity(sub.len(), sub.dim());
    let len = shape.0 * shape.1;
    let mut flagged: BTreeSet<usize> = BTreeSet::new();
    let mut z = vec![0.0; alive.len()];
    for pos in 0..len {
        for (r, &w) in alive.iter().enumerate() {
            z[r] = payloads[w]
                .as_ref()
                .map(|m| m.as_slice()[pos])
                .unwrap_or(0.0);
        }
        let s = sub.parity_check().matmul(&Mat::column(&z))?.into_vec();
        if norm_inf(&s) <= TAU_ZERO * norm_inf(&z) {
            continue;
        }
        match locate(&sub, &s, mode) {
            Some((support, _)) => flagged.extend(support),
            None => {
                return Ok(StreamDecode {
                    outcome: StreamOutcome::Failure,
                    blocks: None,
                })
            }
        }
        if flagged.len() > cap {
            return Ok(StreamDecode {
                outcome: StreamOutcome::Failure,
                blocks: None,
            });
        }
    }
    let keep: Vec<usize> = (0..alive.len()).filter(|r| !flagged.contains(r)).collect();
    let g = Mat::from_fn(keep.len(), sub.dim(), |i, j| {
        sub.generator().get(keep[i], j)
    });
    let rhs = Mat::from_fn(keep.len(), len, |i, pos| {
        payloads[alive[keep[i]]]
            .as_ref()
            .map(|m| m.as_slice()[pos])
            .unwrap_or(0.0)
    });
    let (coef, _) = lstsq(&g, &rhs)?;
    let blocks = (0..sub.dim())
        .map(|q| {
            Mat::new(
                shape.0,
                shape.1,
                coef.as_slice()[q * len..(q + 1) * len].to_vec(),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let outcome = if flagged.is_empty() {
        StreamOutcome::NoErrors
    } else {
        StreamOutcome::Corrected {
            locations: flagged.iter().map(|&r| alive[r]).collect(),
        }
    };
    Ok(StreamDecode {
        outcome,
        blocks: Some(blocks),
    })
}

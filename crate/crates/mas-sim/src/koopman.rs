//! Polynomial lifting and EDMD surrogate models.
//!
//! A fixed quadratic dictionary lifts two-dimensional compartment states
//! `(i, r)` — with `s = 1 − i − r` implied — into a feature space where the
//! nonlinear epidemic dynamics act approximately linearly. Two dictionaries
//! exist:
//!
//! - region `r` (autonomous): `[i, r, s, s·i, s·r, i·r, s², i², r²]`
//!   (9 features);
//! - region `u` (driven): the same 9 plus `[s·ū, ū]` (11 features), where
//!   `ū` is the exogenous input scalar.
//!
//! The first two features are the raw states, so the projection `C = [I₂ 0]`
//! reads them back exactly. EDMD fits a one-step linear operator
//! `K = Y₂ Y₁⁺` on lifted snapshot pairs via a truncated SVD pseudoinverse.
//! For the driven region, the operator is partitioned into a square state
//! block `A` and an input column `B` by discarding the rows and columns that
//! propagate the input features themselves.
//!
//! Rollouts *re-lift* at every step — the state is projected back to `(i, r)`
//! and lifted again — which keeps every feature consistent with the product
//! structure of the dictionary instead of letting the linear dynamics drift
//! off the manifold.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector, Vector2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Relative singular-value truncation threshold for the EDMD pseudoinverse.
pub const SVD_RELATIVE_CUTOFF: f64 = 1e-10;

/// Errors raised by lifting, fitting, and model persistence.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum KoopmanError {
    /// The driven dictionary needs an input scalar; the autonomous one
    /// takes none.
    #[error("dictionary {dictionary} {reason}")]
    InputMismatch {
        dictionary: &'static str,
        reason: &'static str,
    },
    /// Too few snapshots to determine the operator.
    #[error("EDMD needs at least {needed} snapshots, got {got}")]
    InsufficientData { needed: usize, got: usize },
    /// The lifted snapshot matrix lost all rank.
    #[error("lifted snapshot matrix has numerical rank 0")]
    RankCollapse,
    /// A matrix in a persisted model has the wrong shape.
    #[error("model field {field}: expected {expected}, got {got}")]
    ShapeMismatch {
        field: &'static str,
        expected: String,
        got: String,
    },
    /// Reading or writing a model file failed.
    #[error("model i/o failed: {0}")]
    Io(String),
    /// A persisted model did not parse.
    #[error("model parse failed: {0}")]
    Parse(String),
}

/// Which of the two fixed dictionaries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Region {
    /// Autonomous compartment pair (no input).
    #[serde(rename = "r")]
    Rural,
    /// Driven compartment pair (one input scalar).
    #[serde(rename = "u")]
    Urban,
}

/// A fixed polynomial lifting dictionary for one region.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dictionary {
    pub region: Region,
}

impl Dictionary {
    pub const fn rural() -> Self {
        Self {
            region: Region::Rural,
        }
    }

    pub const fn urban() -> Self {
        Self {
            region: Region::Urban,
        }
    }

    /// Number of features.
    pub fn len(&self) -> usize {
        match self.region {
            Region::Rural => 9,
            Region::Urban => 11,
        }
    }

    /// True iff the dictionary has no features (never; kept for idiom).
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Dimension of the state block of the fitted operator: all features
    /// that are functions of the state (plus `s·ū`, which the driven
    /// partition keeps as a state-block column), i.e. everything except
    /// the trailing raw-input feature.
    pub fn state_block_len(&self) -> usize {
        match self.region {
            Region::Rural => 9,
            Region::Urban => 10,
        }
    }
}

/// Lifts a compartment state (and input, for the driven dictionary) into
/// feature space. Feature order is fixed; the first two features are the
/// raw states `i, r`, so `[I₂ 0] · lift(x) = x` exactly.
pub fn lift(
    dict: &Dictionary,
    x: &Vector2<f64>,
    u: Option<f64>,
) -> Result<DVector<f64>, KoopmanError> {
    let (i, r) = (x[0], x[1]);
    let s = 1.0 - i - r;
    let mut features = vec![i, r, s, s * i, s * r, i * r, s * s, i * i, r * r];
    match (dict.region, u) {
        (Region::Rural, None) => {}
        (Region::Rural, Some(_)) => {
            return Err(KoopmanError::InputMismatch {
                dictionary: "r",
                reason: "takes no input scalar",
            });
        }
        (Region::Urban, Some(u)) => {
            features.push(s * u);
            features.push(u);
        }
        (Region::Urban, None) => {
            return Err(KoopmanError::InputMismatch {
                dictionary: "u",
                reason: "requires an input scalar",
            });
        }
    }
    Ok(DVector::from_vec(features))
}

/// One fitted EDMD operator with its diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct EdmdFit {
    /// The one-step operator `K` (N × N) with `ψ(k+1) ≈ K ψ(k)`.
    pub k: DMatrix<f64>,
    /// Per-sample RMS of the fit residual `‖Y₂ − K Y₁‖_F / √(m−1)`.
    pub residual_rms: f64,
    /// Absolute singular-value cutoff used for the pseudoinverse.
    pub cutoff: f64,
    /// Numerical rank of the lifted snapshot matrix at that cutoff.
    pub rank: usize,
}

/// Fits the EDMD operator `K = Y₂ Y₁⁺` on a snapshot trajectory.
///
/// `snapshots[k]` is the state (and, for the driven dictionary, the input)
/// at step `k`; columns `k` and `k+1` form one training pair. The
/// pseudoinverse truncates singular values below
/// [`SVD_RELATIVE_CUTOFF`] × σ_max.
pub fn edmd_fit(
    dict: &Dictionary,
    snapshots: &[(Vector2<f64>, Option<f64>)],
) -> Result<EdmdFit, KoopmanError> {
    let n = dict.len();
    let m = snapshots.len();
    if m < n + 1 {
        return Err(KoopmanError::InsufficientData {
            needed: n + 1,
            got: m,
        });
    }
    let mut lifted = DMatrix::<f64>::zeros(n, m);
    for (col, (x, u)) in snapshots.iter().enumerate() {
        lifted.set_column(col, &lift(dict, x, *u)?);
    }
    let y1 = lifted.columns(0, m - 1).clone_owned();
    let y2 = lifted.columns(1, m - 1).clone_owned();

    let svd = y1.clone().svd(true, true);
    let sigma_max = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let cutoff = sigma_max * SVD_RELATIVE_CUTOFF;
    let rank = svd.singular_values.iter().filter(|&&s| s > cutoff).count();
    if rank == 0 {
        return Err(KoopmanError::RankCollapse);
    }

    // K = Y₂ V Σ⁺ Uᵀ, truncating σ ≤ cutoff.
    let u = svd.u.as_ref().expect("u requested");
    let v_t = svd.v_t.as_ref().expect("v_t requested");
    let mut y2_v = &y2 * v_t.transpose();
    for (j, &s) in svd.singular_values.iter().enumerate() {
        let factor = if s > cutoff { 1.0 / s } else { 0.0 };
        y2_v.column_mut(j).scale_mut(factor);
    }
    let k = y2_v * u.transpose();

    let residual_rms = (&y2 - &k * &y1).norm() / ((m - 1) as f64).sqrt();
    Ok(EdmdFit {
        k,
        residual_rms,
        cutoff,
        rank,
    })
}

/// Splits the driven operator `K_u` into the square state block `A`
/// (dropping the final row and column, which propagate the raw input
/// feature) and the input column `B` (the final column over the state
/// rows).
pub fn extract_blocks(k_u: &DMatrix<f64>) -> Result<(DMatrix<f64>, DVector<f64>), KoopmanError> {
    let n = k_u.nrows();
    if k_u.ncols() != n || n < 2 {
        return Err(KoopmanError::ShapeMismatch {
            field: "k_u",
            expected: "square, at least 2x2".to_string(),
            got: format!("{}x{}", k_u.nrows(), k_u.ncols()),
        });
    }
    let a = k_u.view((0, 0), (n - 1, n - 1)).clone_owned();
    let b = DVector::from_column_slice(k_u.view((0, n - 1), (n - 1, 1)).clone_owned().as_slice());
    Ok((a, b))
}

/// Fit diagnostics persisted alongside the operators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub residual_rms_r: f64,
    pub residual_rms_u: f64,
    pub singular_value_cutoff_r: f64,
    pub singular_value_cutoff_u: f64,
    pub rank_r: usize,
    pub rank_u: usize,
}

/// The paired surrogate model: autonomous operator for the first region,
/// partitioned driven operator for the second.
#[derive(Debug, Clone, PartialEq)]
pub struct KoopmanModel {
    /// Autonomous operator (9 × 9); also the state matrix `A_r`.
    pub k_r: DMatrix<f64>,
    /// Driven operator (11 × 11) before partitioning.
    pub k_u: DMatrix<f64>,
    /// Driven state block `A_u` (10 × 10).
    pub a_u: DMatrix<f64>,
    /// Driven input column `B_u` (10).
    pub b_u: DVector<f64>,
    pub diagnostics: FitDiagnostics,
}

impl KoopmanModel {
    /// Assembles the model from the two fits, partitioning the driven
    /// operator.
    pub fn from_fits(fit_r: EdmdFit, fit_u: EdmdFit) -> Result<Self, KoopmanError> {
        let expect_shape = |m: &DMatrix<f64>, n: usize, field: &'static str| {
            if m.nrows() != n || m.ncols() != n {
                Err(KoopmanError::ShapeMismatch {
                    field,
                    expected: format!("{n}x{n}"),
                    got: format!("{}x{}", m.nrows(), m.ncols()),
                })
            } else {
                Ok(())
            }
        };
        expect_shape(&fit_r.k, Dictionary::rural().len(), "k_r")?;
        expect_shape(&fit_u.k, Dictionary::urban().len(), "k_u")?;
        let (a_u, b_u) = extract_blocks(&fit_u.k)?;
        Ok(Self {
            k_r: fit_r.k,
            k_u: fit_u.k,
            a_u,
            b_u,
            diagnostics: FitDiagnostics {
                residual_rms_r: fit_r.residual_rms,
                residual_rms_u: fit_u.residual_rms,
                singular_value_cutoff_r: fit_r.cutoff,
                singular_value_cutoff_u: fit_u.cutoff,
                rank_r: fit_r.rank,
                rank_u: fit_u.rank,
            },
        })
    }

    /// The autonomous state matrix `A_r` (the whole operator).
    pub fn a_r(&self) -> &DMatrix<f64> {
        &self.k_r
    }

    /// Projection reading `(i, r)` out of the autonomous feature vector.
    pub fn c_r(&self) -> DMatrix<f64> {
        projection(2, Dictionary::rural().len())
    }

    /// Projection reading `(i, r)` out of the driven state block.
    pub fn c_u(&self) -> DMatrix<f64> {
        projection(2, Dictionary::urban().state_block_len())
    }
}

fn projection(rows: usize, cols: usize) -> DMatrix<f64> {
    let mut c = DMatrix::zeros(rows, cols);
    for i in 0..rows {
        c[(i, i)] = 1.0;
    }
    c
}

/// A paired rollout of both regions.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutTraj {
    /// Autonomous-region states, steps `0..=steps`.
    pub rural: Vec<Vector2<f64>>,
    /// Driven-region states, steps `0..=steps`.
    pub urban: Vec<Vector2<f64>>,
    /// Input applied to the driven region at each step `0..steps`.
    pub inputs: Vec<f64>,
}

/// Rolls both surrogate regions forward with re-lifting at every step.
///
/// The autonomous region advances first over the whole span; the driven
/// region then advances with `input_policy(k, &rural_states)` supplying its
/// input at step `k` (policies typically read a delayed entry of the rural
/// trajectory, or lift one through a compensation row).
pub fn relift_rollout<F>(
    model: &KoopmanModel,
    x0_r: Vector2<f64>,
    x0_u: Vector2<f64>,
    mut input_policy: F,
    steps: usize,
) -> Result<RolloutTraj, KoopmanError>
where
    F: FnMut(usize, &[Vector2<f64>]) -> f64,
{
    let dict_r = Dictionary::rural();
    let dict_u = Dictionary::urban();
    let mut rural = Vec::with_capacity(steps + 1);
    rural.push(x0_r);
    for k in 0..steps {
        let psi = lift(&dict_r, &rural[k], None)?;
        let next = model.k_r.view((0, 0), (2, dict_r.len())) * psi;
        rural.push(Vector2::new(next[0], next[1]));
    }

    let mut urban = Vec::with_capacity(steps + 1);
    let mut inputs = Vec::with_capacity(steps);
    urban.push(x0_u);
    let nu = dict_u.state_block_len();
    for k in 0..steps {
        let u = input_policy(k, &rural);
        let psi = lift(&dict_u, &urban[k], Some(u))?;
        let state_part = psi.rows(0, nu).clone_owned();
        let next = model.a_u.view((0, 0), (2, nu)) * state_part + model.b_u.rows(0, 2) * u;
        urban.push(Vector2::new(next[0], next[1]));
        inputs.push(u);
    }
    Ok(RolloutTraj {
        rural,
        urban,
        inputs,
    })
}

/// Serialized form: matrices as row-major nested arrays.
#[derive(Serialize, Deserialize)]
struct PersistedModel {
    dictionary_r: Dictionary,
    dictionary_u: Dictionary,
    k_r: Vec<Vec<f64>>,
    k_u: Vec<Vec<f64>>,
    a_u: Vec<Vec<f64>>,
    b_u: Vec<f64>,
    c_r: Vec<Vec<f64>>,
    c_u: Vec<Vec<f64>>,
    diagnostics: FitDiagnostics,
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

fn from_rows(rows: &[Vec<f64>], field: &'static str) -> Result<DMatrix<f64>, KoopmanError> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, |r| r.len());
    if nrows == 0 || ncols == 0 || rows.iter().any(|r| r.len() != ncols) {
        return Err(KoopmanError::ShapeMismatch {
            field,
            expected: "rectangular, non-empty".to_string(),
            got: format!("{nrows} rows"),
        });
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

impl KoopmanModel {
    /// Serializes to JSON (row-major nested arrays, dictionary tags, and
    /// diagnostics).
    pub fn to_json(&self) -> String {
        let persisted = PersistedModel {
            dictionary_r: Dictionary::rural(),
            dictionary_u: Dictionary::urban(),
            k_r: to_rows(&self.k_r),
            k_u: to_rows(&self.k_u),
            a_u: to_rows(&self.a_u),
            b_u: self.b_u.iter().cloned().collect(),
            c_r: to_rows(&self.c_r()),
            c_u: to_rows(&self.c_u()),
            diagnostics: self.diagnostics.clone(),
        };
        serde_json::to_string_pretty(&persisted).expect("plain data serializes")
    }

    /// Parses a model from JSON, checking shapes and the block partition.
    pub fn from_json(text: &str) -> Result<Self, KoopmanError> {
        let persisted: PersistedModel =
            serde_json::from_str(text).map_err(|e| KoopmanError::Parse(e.to_string()))?;
        let k_r = from_rows(&persisted.k_r, "k_r")?;
        let k_u = from_rows(&persisted.k_u, "k_u")?;
        let a_u = from_rows(&persisted.a_u, "a_u")?;
        let b_u = DVector::from_vec(persisted.b_u.clone());
        let (want_a, want_b) = extract_blocks(&k_u)?;
        if a_u != want_a || b_u != want_b {
            return Err(KoopmanError::Parse(
                "a_u/b_u do not match the partition of k_u".to_string(),
            ));
        }
        let model = Self {
            k_r,
            k_u,
            a_u,
            b_u,
            diagnostics: persisted.diagnostics,
        };
        if model.k_r.nrows() != Dictionary::rural().len() {
            return Err(KoopmanError::ShapeMismatch {
                field: "k_r",
                expected: format!("{0}x{0}", Dictionary::rural().len()),
                got: format!("{}x{}", model.k_r.nrows(), model.k_r.ncols()),
            });
        }
        Ok(model)
    }

    /// Writes the JSON form to a file.
    pub fn save(&self, path: &Path) -> Result<(), KoopmanError> {
        fs::write(path, self.to_json()).map_err(|e| KoopmanError::Io(e.to_string()))
    }

    /// Reads a model back from a JSON file.
    pub fn load(path: &Path) -> Result<Self, KoopmanError> {
        let text = fs::read_to_string(path).map_err(|e| KoopmanError::Io(e.to_string()))?;
        Self::from_json(&text)
    }
}

//! Ground-truth and measurement generation, observation noise, Monte-Carlo
//! restricted-isometry estimates, and the on-disk sensing container.

use std::io::{Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{FactorMatrix, GroundTruth};
use crate::rng::SeededRng;

const MAGIC: &[u8; 4] = b"LPSS";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SensingKind {
    DenseGaussian,
    RankOne,
}

/// Entry variance of Gaussian measurement matrices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GaussianScale {
    /// `N(0, 1)` entries: `E⟨A, X⟩² = ‖X‖_F²` for symmetric `X`.
    #[default]
    Isotropic,
    /// `N(0, 1/d)` entries.
    PerDimension,
}

impl GaussianScale {
    pub fn std_dev(self, d: usize) -> f64 {
        match self {
            GaussianScale::Isotropic => 1.0,
            GaussianScale::PerDimension => 1.0 / (d as f64).sqrt(),
        }
    }
}

/// `n` measurement operators on `d × d` matrices plus their observations.
///
/// Dense operators are stored as an `n × d²` design matrix whose row `i` is
/// `vec(A_i)` (column-major). Rank-one operators `A_i = x_i x_iᵀ` are stored
/// as an `n × d` matrix of the `x_i`; no `d × d` matrix is ever formed for
/// them.
#[derive(Debug, Clone)]
pub struct SensingSet {
    kind: SensingKind,
    dim: usize,
    data: DMatrix<f64>,
    observations: Option<DVector<f64>>,
    noise_sigma: f64,
    seed: u64,
}

impl SensingSet {
    /// Dense set from explicit symmetric matrices.
    pub fn from_matrices(matrices: &[DMatrix<f64>]) -> Result<Self> {
        let d = matrices
            .first()
            .ok_or_else(|| Error::InvalidArgument("no measurement matrices".into()))?
            .nrows();
        let mut data = DMatrix::zeros(matrices.len(), d * d);
        for (i, a) in matrices.iter().enumerate() {
            if a.shape() != (d, d) {
                return Err(Error::DimensionMismatch(format!(
                    "measurement {i} is {:?}, expected {d}x{d}",
                    a.shape()
                )));
            }
            if a != &a.transpose() {
                return Err(Error::InvalidArgument(format!("measurement {i} is not symmetric")));
            }
            data.row_mut(i)
                .copy_from(&DMatrix::from_row_slice(1, d * d, a.as_slice()));
        }
        Ok(Self {
            kind: SensingKind::DenseGaussian,
            dim: d,
            data,
            observations: None,
            noise_sigma: 0.0,
            seed: 0,
        })
    }

    /// Rank-one set `A_i = x_i x_iᵀ` from the rows of `vectors` (n × d).
    pub fn from_vectors(vectors: DMatrix<f64>) -> Result<Self> {
        if vectors.nrows() == 0 || vectors.ncols() == 0 {
            return Err(Error::InvalidArgument("empty rank-one set".into()));
        }
        Ok(Self {
            kind: SensingKind::RankOne,
            dim: vectors.ncols(),
            data: vectors,
            observations: None,
            noise_sigma: 0.0,
            seed: 0,
        })
    }

    pub fn kind(&self) -> SensingKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.data.nrows() == 0
    }

    pub fn noise_sigma(&self) -> f64 {
        self.noise_sigma
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Row `i` is `vec(A_i)` (dense) or `x_i` (rank-one).
    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    /// Number of stored reals in the operator payload.
    pub fn payload_len(&self) -> usize {
        self.data.len()
    }

    pub fn observations(&self) -> Option<&DVector<f64>> {
        self.observations.as_ref()
    }

    pub fn is_measured(&self) -> bool {
        self.observations.is_some()
    }

    /// `A_i` materialized (for tests and small-instance export).
    pub fn matrix(&self, i: usize) -> DMatrix<f64> {
        let d = self.dim;
        match self.kind {
            SensingKind::DenseGaussian => DMatrix::from_iterator(d, d, self.data.row(i).iter().copied()),
            SensingKind::RankOne => {
                let x = self.data.row(i).transpose();
                &x * x.transpose()
            }
        }
    }

    /// `⟨A_i, X⟩` for every `i`.
    pub fn apply(&self, x: &DMatrix<f64>) -> Result<DVector<f64>> {
        let d = self.dim;
        if x.nrows() != d || x.ncols() != d {
            return Err(Error::DimensionMismatch(format!(
                "operator on {d}x{d} applied to {}x{}",
                x.nrows(),
                x.ncols()
            )));
        }
        Ok(match self.kind {
            SensingKind::DenseGaussian => {
                let v = DVector::from_column_slice(x.as_slice());
                &self.data * v
            }
            SensingKind::RankOne => {
                let xa = &self.data * x;
                DVector::from_fn(self.len(), |i, _| xa.row(i).dot(&self.data.row(i)))
            }
        })
    }

    /// `⟨A_i, U Uᵀ⟩` for every `i`, without forming `U Uᵀ` for rank-one sets.
    pub fn predict(&self, u: &DMatrix<f64>) -> Result<DVector<f64>> {
        if u.nrows() != self.dim {
            return Err(Error::DimensionMismatch(format!(
                "factor has {} rows, sensing dimension is {}",
                u.nrows(),
                self.dim
            )));
        }
        match self.kind {
            SensingKind::DenseGaussian => self.apply(&(u * u.transpose())),
            SensingKind::RankOne => {
                let xu = &self.data * u;
                Ok(DVector::from_fn(self.len(), |i, _| xu.row(i).norm_squared()))
            }
        }
    }

    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_u32::<LittleEndian>(FORMAT_VERSION)?;
        w.write_u8(match self.kind {
            SensingKind::DenseGaussian => 0,
            SensingKind::RankOne => 1,
        })?;
        w.write_u64::<LittleEndian>(self.len() as u64)?;
        w.write_u64::<LittleEndian>(self.dim as u64)?;
        w.write_f64::<LittleEndian>(self.noise_sigma)?;
        w.write_u64::<LittleEndian>(self.seed)?;
        w.write_u8(u8::from(self.observations.is_some()))?;
        for i in 0..self.len() {
            for v in self.data.row(i).iter() {
                w.write_f64::<LittleEndian>(*v)?;
            }
        }
        if let Some(y) = &self.observations {
            for v in y.iter() {
                w.write_f64::<LittleEndian>(*v)?;
            }
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        let version = r.read_u32::<LittleEndian>()?;
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let kind = match r.read_u8()? {
            0 => SensingKind::DenseGaussian,
            1 => SensingKind::RankOne,
            other => return Err(Error::Format(format!("unknown kind tag {other}"))),
        };
        let n = r.read_u64::<LittleEndian>()? as usize;
        let dim = r.read_u64::<LittleEndian>()? as usize;
        let noise_sigma = r.read_f64::<LittleEndian>()?;
        let seed = r.read_u64::<LittleEndian>()?;
        let measured = r.read_u8()? != 0;
        let width = match kind {
            SensingKind::DenseGaussian => dim * dim,
            SensingKind::RankOne => dim,
        };
        let mut data = DMatrix::zeros(n, width);
        for i in 0..n {
            for j in 0..width {
                data[(i, j)] = r.read_f64::<LittleEndian>()?;
            }
        }
        let observations = if measured {
            let mut y = DVector::zeros(n);
            for v in y.iter_mut() {
                *v = r.read_f64::<LittleEndian>()?;
            }
            Some(y)
        } else {
            None
        };
        Ok(Self {
            kind,
            dim,
            data,
            observations,
            noise_sigma,
            seed,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_binary(std::io::BufWriter::new(file))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_binary(std::io::BufReader::new(file))
    }

    /// CSV export: header `index,y,a0,a1,...`, one row per measurement, where
    /// `a*` is `vec(A_i)` for dense sets and `x_i` for rank-one sets. `y` is
    /// empty for unmeasured sets.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["index".to_string(), "y".to_string()];
        header.extend((0..self.data.ncols()).map(|j| format!("a{j}")));
        out.write_record(&header)?;
        for i in 0..self.len() {
            let mut rec = vec![
                i.to_string(),
                self.observations
                    .as_ref()
                    .map(|y| format!("{:e}", y[i]))
                    .unwrap_or_default(),
            ];
            rec.extend(self.data.row(i).iter().map(|v| format!("{v:e}")));
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Draws `U⋆ = Q diag(s) Pᵀ` with Haar-distributed `Q` (d × r) and `P`
/// (r × r); `s` steps linearly from 1 down to `sigma_r_star`. For `r = 1`
/// the single singular value is 1.
pub fn gen_ground_truth(d: usize, r: usize, sigma_r_star: f64, rng: &mut SeededRng) -> Result<GroundTruth> {
    if r == 0 || r > d {
        return Err(Error::InvalidArgument(format!("need 1 <= r <= d, got r={r}, d={d}")));
    }
    if !(sigma_r_star > 0.0 && sigma_r_star <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "sigma_r_star must lie in (0, 1], got {sigma_r_star}"
        )));
    }
    let q = haar_orthonormal(d, r, rng);
    let p = haar_orthonormal(r, r, rng);
    let s: Vec<f64> = (0..r)
        .map(|i| {
            if r == 1 {
                1.0
            } else {
                1.0 - (1.0 - sigma_r_star) * i as f64 / (r - 1) as f64
            }
        })
        .collect();
    let mut qs = q;
    for (j, sj) in s.iter().enumerate() {
        qs.column_mut(j).scale_mut(*sj);
    }
    GroundTruth::new(FactorMatrix::new(qs * p.transpose())?)
}

/// Orthonormal columns distributed by Haar measure: QR of a Gaussian matrix
/// with the signs of `diag(R)` folded into `Q`.
fn haar_orthonormal(rows: usize, cols: usize, rng: &mut SeededRng) -> DMatrix<f64> {
    let g = rng.normal_matrix(rows, cols, 1.0);
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..cols {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// `n` raw (unsymmetrized) Gaussian draws, each `d × d`, as design rows.
pub(crate) fn raw_gaussian_design(n: usize, d: usize, scale: GaussianScale, rng: &mut SeededRng) -> DMatrix<f64> {
    let sd = scale.std_dev(d);
    let mut design = DMatrix::zeros(n, d * d);
    for i in 0..n {
        for j in 0..d * d {
            design[(i, j)] = sd * rng.normal();
        }
    }
    design
}

/// Gaussian measurement operators, symmetrized as `(A + Aᵀ)/2`.
pub fn gen_gaussian_sensing(n: usize, d: usize, scale: GaussianScale, rng: &mut SeededRng) -> Result<SensingSet> {
    if n == 0 || d == 0 {
        return Err(Error::InvalidArgument("need n >= 1 and d >= 1".into()));
    }
    let mut data = raw_gaussian_design(n, d, scale, rng);
    for i in 0..n {
        for a in 0..d {
            for b in (a + 1)..d {
                let (ab, ba) = (a + b * d, b + a * d);
                let avg = 0.5 * (data[(i, ab)] + data[(i, ba)]);
                data[(i, ab)] = avg;
                data[(i, ba)] = avg;
            }
        }
    }
    Ok(SensingSet {
        kind: SensingKind::DenseGaussian,
        dim: d,
        data,
        observations: None,
        noise_sigma: 0.0,
        seed: rng.seed(),
    })
}

/// Rank-one operators `A_i = x_i x_iᵀ` with `x_i ~ N(0, I_d)`.
pub fn gen_rank_one_sensing(n: usize, d: usize, rng: &mut SeededRng) -> Result<SensingSet> {
    if n == 0 || d == 0 {
        return Err(Error::InvalidArgument("need n >= 1 and d >= 1".into()));
    }
    Ok(SensingSet {
        kind: SensingKind::RankOne,
        dim: d,
        data: rng.normal_matrix(n, d, 1.0),
        observations: None,
        noise_sigma: 0.0,
        seed: rng.seed(),
    })
}

/// Fills `y_i = ⟨A_i, U⋆U⋆ᵀ⟩ + ε_i` with `ε_i ~ N(0, σ²)`.
pub fn measure(star: &GroundTruth, sensing: &SensingSet, sigma: f64, rng: &mut SeededRng) -> Result<SensingSet> {
    if !(sigma >= 0.0) {
        return Err(Error::InvalidArgument(format!("noise sigma must be >= 0, got {sigma}")));
    }
    let mut y = sensing.predict(star.factor().matrix())?;
    if sigma > 0.0 {
        for v in y.iter_mut() {
            *v += sigma * rng.normal();
        }
    }
    let mut out = sensing.clone();
    out.observations = Some(y);
    out.noise_sigma = sigma;
    Ok(out)
}

/// `|(1/n) Σ ⟨A_i, X⟩² / ‖X‖_F² − 1|` for one probe.
pub fn rip_statistic(sensing: &SensingSet, x: &DMatrix<f64>) -> Result<f64> {
    let fro2 = x.norm_squared();
    if fro2 == 0.0 {
        return Err(Error::InvalidArgument("probe matrix is zero".into()));
    }
    let v = sensing.apply(x)?;
    Ok((v.norm_squared() / sensing.len() as f64 / fro2 - 1.0).abs())
}

#[derive(Debug, Clone)]
pub struct RipEstimate {
    /// Largest deviation seen; a lower bound on the true RIP constant.
    pub delta_hat: f64,
    pub witness: DMatrix<f64>,
    pub trials: usize,
}

/// Monte-Carlo lower bound on the restricted-isometry constant over
/// symmetric matrices of rank at most `rank_bound`.
///
/// Probes are `F diag(g) Fᵀ` normalized to unit Frobenius norm, with `F`
/// (d × rank_bound) and `g` Gaussian. Trials consume `rng` sequentially, so a
/// run with more trials sees a superset of the probes of a shorter run.
pub fn rip_estimate(
    sensing: &SensingSet,
    rank_bound: usize,
    trials: usize,
    rng: &mut SeededRng,
) -> Result<RipEstimate> {
    if trials == 0 {
        return Err(Error::InvalidArgument("rip_estimate needs trials >= 1".into()));
    }
    if sensing.kind() != SensingKind::DenseGaussian {
        return Err(Error::InvalidArgument(
            "RIP estimation is defined for dense Gaussian sets".into(),
        ));
    }
    if rank_bound == 0 {
        return Err(Error::InvalidArgument("rank bound must be >= 1".into()));
    }
    let d = sensing.dim();
    let mut best = (f64::NEG_INFINITY, DMatrix::zeros(d, d));
    for _ in 0..trials {
        let f = rng.normal_matrix(d, rank_bound, 1.0);
        let mut fg = f.clone();
        for j in 0..rank_bound {
            let g = rng.normal();
            fg.column_mut(j).scale_mut(g);
        }
        let mut x = fg * f.transpose();
        let norm = x.norm();
        if norm == 0.0 {
            continue;
        }
        x /= norm;
        let stat = rip_statistic(sensing, &x)?;
        if stat > best.0 {
            best = (stat, x);
        }
    }
    Ok(RipEstimate {
        delta_hat: best.0.max(0.0),
        witness: best.1,
        trials,
    })
}

/// The finite-sample guarantee asks for `δ ≤ c_δ (σ_r⋆)^{3/2} / (√k r^{5/2})`.
pub fn rip_requirement(c_delta: f64, sigma_r_star: f64, k: usize, r: usize) -> f64 {
    c_delta * sigma_r_star.powf(1.5) / ((k as f64).sqrt() * (r as f64).powf(2.5))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn ground_truth_rank_one_has_unit_norm() {
        let mut rng = SeededRng::new(1);
        let star = gen_ground_truth(7, 1, 0.3, &mut rng).unwrap();
        assert_relative_eq!(star.factor().norm(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn ground_truth_unit_spectrum_is_orthonormal() {
        let mut rng = SeededRng::new(2);
        let star = gen_ground_truth(10, 4, 1.0, &mut rng).unwrap();
        let gram = star.factor().tr_mul(star.factor());
        assert!((gram - DMatrix::<f64>::identity(4, 4)).amax() < 1e-12);
    }

    #[test]
    fn ground_truth_spectrum_matches_svd_oracle() {
        let mut rng = SeededRng::new(3);
        let star = gen_ground_truth(20, 3, 0.5, &mut rng).unwrap();
        let sv = crate::linalg::singular_values(star.factor());
        for (got, want) in sv.iter().zip([1.0, 0.75, 0.5]) {
            assert_relative_eq!(*got, want, epsilon = 1e-12);
        }
        assert_relative_eq!(star.sigma_r_star(), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn ground_truth_rejects_bad_ranges() {
        let mut rng = SeededRng::new(4);
        assert!(gen_ground_truth(3, 4, 0.5, &mut rng).is_err());
        assert!(gen_ground_truth(3, 0, 0.5, &mut rng).is_err());
        assert!(gen_ground_truth(3, 2, 0.0, &mut rng).is_err());
        assert!(gen_ground_truth(3, 2, 1.5, &mut rng).is_err());
    }

    #[test]
    fn raw_draw_variance_matches_per_dimension_scale() {
        let (n, d) = (2000, 8);
        let mut rng = SeededRng::new(5);
        let design = raw_gaussian_design(n, d, GaussianScale::PerDimension, &mut rng);
        let count = design.len() as f64;
        let mean = design.sum() / count;
        let var = design.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / count;
        assert!((var * d as f64 - 1.0).abs() < 0.1, "variance {var}");
        // Unbiased: within 5 standard errors of zero.
        assert!(mean.abs() < 5.0 * (var / count).sqrt());
    }

    #[test]
    fn gaussian_matrices_are_exactly_symmetric() {
        let mut rng = SeededRng::new(6);
        let s = gen_gaussian_sensing(5, 6, GaussianScale::Isotropic, &mut rng).unwrap();
        for i in 0..s.len() {
            let a = s.matrix(i);
            assert_eq!(a, a.transpose());
        }
    }

    #[test]
    fn isotropic_second_moment_on_unit_rank_one() {
        let (n, d) = (20_000, 6);
        let mut rng = SeededRng::new(7);
        let s = gen_gaussian_sensing(n, d, GaussianScale::Isotropic, &mut rng).unwrap();
        let v = rng.normal_vector(d, 1.0).normalize();
        let x = &v * v.transpose();
        let m = s.apply(&x).unwrap().norm_squared() / n as f64;
        assert!((m - 1.0).abs() < 0.1, "second moment {m}");
    }

    #[test]
    fn noiseless_measure_is_exact() {
        let mut rng = SeededRng::new(8);
        let star = gen_ground_truth(5, 2, 0.5, &mut rng).unwrap();
        let s = gen_gaussian_sensing(10, 5, GaussianScale::Isotropic, &mut rng).unwrap();
        let m = measure(&star, &s, 0.0, &mut rng).unwrap();
        let x = star.gram();
        for i in 0..10 {
            let direct = m.matrix(i).component_mul(&x).sum();
            assert_relative_eq!(m.observations().unwrap()[i], direct, epsilon = 1e-12);
        }
    }

    #[test]
    fn pure_noise_variance() {
        let mut rng = SeededRng::new(9);
        let tiny = GroundTruth::new(FactorMatrix::new(DMatrix::from_element(4, 1, 1e-300)).unwrap()).unwrap();
        let s = gen_gaussian_sensing(3000, 4, GaussianScale::Isotropic, &mut rng).unwrap();
        let m = measure(&tiny, &s, 0.3, &mut rng).unwrap();
        let y = m.observations().unwrap();
        let mean = y.mean();
        let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (y.len() - 1) as f64;
        assert!((var / 0.09 - 1.0).abs() < 0.15, "variance {var}");
    }

    #[test]
    fn rank_one_labels_are_quadratic_network_outputs() {
        let mut rng = SeededRng::new(10);
        let star = gen_ground_truth(6, 2, 0.5, &mut rng).unwrap();
        let s = gen_rank_one_sensing(7, 6, &mut rng).unwrap();
        let m = measure(&star, &s, 0.0, &mut rng).unwrap();
        for i in 0..7 {
            let x = s.data().row(i).transpose();
            let want: f64 = (0..2).map(|j| x.dot(&star.factor().column(j)).powi(2)).sum();
            assert_relative_eq!(m.observations().unwrap()[i], want, epsilon = 1e-12);
        }
        assert_eq!(s.payload_len(), 7 * 6);
    }

    #[test]
    fn measure_is_bitwise_reproducible() {
        let run = || {
            let mut rng = SeededRng::new(11);
            let star = gen_ground_truth(5, 2, 0.5, &mut rng).unwrap();
            let s = gen_gaussian_sensing(20, 5, GaussianScale::Isotropic, &mut rng).unwrap();
            measure(&star, &s, 0.1, &mut rng).unwrap()
        };
        let (a, b) = (run(), run());
        let bits = |s: &SensingSet| -> Vec<u64> { s.observations().unwrap().iter().map(|v| v.to_bits()).collect() };
        assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn measure_dimension_mismatch() {
        let mut rng = SeededRng::new(12);
        let star = gen_ground_truth(5, 2, 0.5, &mut rng).unwrap();
        let s = gen_gaussian_sensing(4, 6, GaussianScale::Isotropic, &mut rng).unwrap();
        assert!(measure(&star, &s, 0.0, &mut rng).is_err());
    }

    #[test]
    fn rip_large_sample_is_small() {
        let mut rng = SeededRng::new(13);
        let s = gen_gaussian_sensing(50_000, 8, GaussianScale::Isotropic, &mut rng).unwrap();
        let est = rip_estimate(&s, 2, 20, &mut rng).unwrap();
        assert!(est.delta_hat <= 0.1, "delta_hat {}", est.delta_hat);
    }

    #[test]
    fn rip_undersampled_is_large() {
        let mut rng = SeededRng::new(14);
        let s = gen_gaussian_sensing(8, 8, GaussianScale::Isotropic, &mut rng).unwrap();
        let est = rip_estimate(&s, 2, 200, &mut rng).unwrap();
        assert!(est.delta_hat > 0.5, "delta_hat {}", est.delta_hat);
    }

    #[test]
    fn rip_witness_matches_direct_evaluation() {
        let mut rng = SeededRng::new(15);
        let s = gen_gaussian_sensing(30, 4, GaussianScale::Isotropic, &mut rng).unwrap();
        let v = DVector::from_vec(vec![1.0, 0.0, 0.0, 0.0]);
        let x = &v * v.transpose();
        let direct = ((0..30).map(|i| s.matrix(i)[(0, 0)].powi(2)).sum::<f64>() / 30.0 - 1.0).abs();
        assert_relative_eq!(rip_statistic(&s, &x).unwrap(), direct, epsilon = 1e-12);
    }

    #[test]
    fn rip_monotone_in_nested_trials() {
        let mut rng = SeededRng::new(16);
        let s = gen_gaussian_sensing(40, 5, GaussianScale::Isotropic, &mut rng).unwrap();
        let mut last = 0.0;
        for trials in [1, 5, 25, 100] {
            let mut probe = SeededRng::new(99);
            let est = rip_estimate(&s, 2, trials, &mut probe).unwrap();
            assert!(est.delta_hat >= last);
            last = est.delta_hat;
        }
    }

    #[test]
    fn rip_errors() {
        let mut rng = SeededRng::new(17);
        let s = gen_gaussian_sensing(4, 3, GaussianScale::Isotropic, &mut rng).unwrap();
        assert!(rip_estimate(&s, 2, 0, &mut rng).is_err());
        let r1 = gen_rank_one_sensing(4, 3, &mut rng).unwrap();
        assert!(rip_estimate(&r1, 2, 3, &mut rng).is_err());
    }

    #[test]
    fn binary_container_round_trip_and_layout() {
        let mut rng = SeededRng::new(18);
        let star = gen_ground_truth(3, 1, 1.0, &mut rng).unwrap();
        let s = gen_gaussian_sensing(2, 3, GaussianScale::Isotropic, &mut rng).unwrap();
        let m = measure(&star, &s, 0.25, &mut rng).unwrap();
        let mut buf = Vec::new();
        m.write_binary(&mut buf).unwrap();
        // header 4+4+1+8+8+8+8+1, payload 2*9 + 2 reals
        assert_eq!(buf.len(), 42 + 8 * 20);
        assert_eq!(&buf[..4], b"LPSS");
        let back = SensingSet::read_binary(buf.as_slice()).unwrap();
        assert_eq!(back.data(), m.data());
        assert_eq!(back.observations(), m.observations());
        assert_eq!(back.noise_sigma(), 0.25);
        assert_eq!(back.seed(), m.seed());
        assert!(SensingSet::read_binary(&b"XXXX"[..]).is_err());
    }

    #[test]
    fn csv_export_has_documented_header() {
        let mut rng = SeededRng::new(19);
        let s = gen_rank_one_sensing(3, 2, &mut rng).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "index,y,a0,a1");
        assert_eq!(lines.count(), 3);
    }
}

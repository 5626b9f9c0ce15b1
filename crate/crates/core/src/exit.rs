//! Monte-Carlo estimation of the probability that the estimation-error
//! process leaves the norm ball of radius `delta`, tabulated offline over a
//! grid of initial error norms and queried at runtime by interpolation.
//!
//! The discrete error recursion `z+ = A_cl z + w` is simulated directly:
//! it is the exact law of the implemented error process, so no
//! continuous-time discretization is involved. Tables are indexed by the
//! error norm only; initial conditions are drawn uniformly on the sphere of
//! each grid radius, which averages over directions.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linalg;
use crate::rng::{self, tag};

/// Parameters of the error process whose exit behaviour is tabulated.
#[derive(Debug, Clone)]
pub struct ErrorProcessSpec {
    /// Transition matrix of the error recursion. Defaults to the open-loop
    /// plant matrix, since process and predictor share the control input.
    pub a_cl: DMatrix<f64>,
    pub sigma_w: DMatrix<f64>,
    pub delta: f64,
    /// Step length in seconds; a table column `m` corresponds to `m * dt`.
    pub dt: f64,
}

impl ErrorProcessSpec {
    /// Checks the spec and returns human-readable warnings for conditions
    /// that are suspicious but not fatal (an expanding error process is
    /// legitimate for open-loop unstable plants).
    pub fn validate(&self) -> Result<Vec<String>> {
        if !self.a_cl.is_square() {
            return Err(Error::config("error process matrix must be square"));
        }
        if self.sigma_w.nrows() != self.a_cl.nrows() || !self.sigma_w.is_square() {
            return Err(Error::config("noise covariance must match the state dimension"));
        }
        if self
            .a_cl
            .iter()
            .chain(self.sigma_w.iter())
            .any(|v| !v.is_finite())
        {
            return Err(Error::config("error process spec contains nonfinite entries"));
        }
        if !(self.delta > 0.0) {
            return Err(Error::config("threshold delta must be positive"));
        }
        if !(self.dt > 0.0) {
            return Err(Error::config("step size dt must be positive"));
        }
        let mut warnings = Vec::new();
        let rho = linalg::spectral_radius(&self.a_cl);
        if rho >= 1.0 {
            warnings.push(format!(
                "error process matrix has spectral radius {rho:.4} >= 1; exits accumulate without contraction"
            ));
        }
        Ok(warnings)
    }

    /// Fingerprint binding a table to the spec, sample count and seed that
    /// produced it.
    pub fn fingerprint(&self, samples: usize, seed: u64) -> String {
        let mut hasher = Sha256::new();
        let payload = serde_json::json!({
            "a_cl": self.a_cl.as_slice(),
            "rows": self.a_cl.nrows(),
            "sigma_w": self.sigma_w.as_slice(),
            "delta": self.delta,
            "dt": self.dt,
            "samples": samples,
            "seed": seed,
        });
        hasher.update(payload.to_string().as_bytes());
        hex::encode(&hasher.finalize()[..16])
    }
}

/// Precompiled simulator for the error recursion.
pub struct ExitSimulator {
    a_cl: DMatrix<f64>,
    noise_factor: DMatrix<f64>,
    delta: f64,
}

impl ExitSimulator {
    pub fn new(spec: &ErrorProcessSpec) -> Result<Self> {
        spec.validate()?;
        Ok(Self {
            a_cl: spec.a_cl.clone(),
            noise_factor: linalg::covariance_sqrt(&spec.sigma_w)?,
            delta: spec.delta,
        })
    }

    /// First step index in `1..=max_steps` at which the trajectory from
    /// `z0` leaves the ball, `Some(0)` if `z0` already lies outside, `None`
    /// if no exit happens within the horizon.
    pub fn simulate_exit<R: rand::Rng>(
        &self,
        z0: &DVector<f64>,
        max_steps: usize,
        rng: &mut R,
    ) -> Option<usize> {
        if z0.norm() >= self.delta {
            return Some(0);
        }
        let n = self.a_cl.nrows();
        let mut z = z0.clone();
        for m in 1..=max_steps {
            z = &self.a_cl * &z + &self.noise_factor * linalg::standard_normal_vector(n, rng);
            if z.norm() >= self.delta {
                return Some(m);
            }
        }
        None
    }
}

/// Convenience wrapper building the simulator for a single trajectory.
pub fn simulate_exit<R: rand::Rng>(
    spec: &ErrorProcessSpec,
    z0: &DVector<f64>,
    max_steps: usize,
    rng: &mut R,
) -> Result<Option<usize>> {
    if max_steps < 1 {
        return Err(Error::config("max_steps must be at least 1"));
    }
    Ok(ExitSimulator::new(spec)?.simulate_exit(z0, max_steps, rng))
}

/// Tabulated exit probabilities `H(norm, m)` for `m in 0..=max_steps`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ExitProbTable {
    pub norm_grid: Vec<f64>,
    pub max_steps: usize,
    pub delta: f64,
    pub dt: f64,
    pub samples: usize,
    pub seed: u64,
    /// `values[g][m]` is the empirical probability of exit within `m` steps
    /// from initial norm `norm_grid[g]`.
    pub values: Vec<Vec<f64>>,
    pub spec_fingerprint: String,
}

impl ExitProbTable {
    /// Linear interpolation on the norm axis at a fixed step count. Step 0
    /// and out-of-domain norms are exact, not interpolated.
    pub fn query_exit_probability(&self, z_norm: f64, steps: usize) -> Result<f64> {
        if steps > self.max_steps {
            return Err(Error::Query(format!(
                "step count {steps} exceeds table horizon {}",
                self.max_steps
            )));
        }
        if !z_norm.is_finite() || z_norm < 0.0 {
            return Err(Error::Query(format!("invalid error norm {z_norm}")));
        }
        if steps == 0 {
            return Ok(if z_norm >= self.delta { 1.0 } else { 0.0 });
        }
        if z_norm >= self.delta {
            return Ok(1.0);
        }
        let grid = &self.norm_grid;
        // grid is ascending over [0, delta]; z_norm < delta <= grid.last()
        let hi = grid.partition_point(|&g| g < z_norm);
        if hi == 0 {
            return Ok(self.values[0][steps]);
        }
        if (grid[hi] - z_norm).abs() == 0.0 {
            return Ok(self.values[hi][steps]);
        }
        let (g0, g1) = (grid[hi - 1], grid[hi]);
        let t = (z_norm - g0) / (g1 - g0);
        Ok(self.values[hi - 1][steps] * (1.0 - t) + self.values[hi][steps] * t)
    }

    fn payload_checksum(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.spec_fingerprint.as_bytes());
        hasher.update(self.max_steps.to_le_bytes());
        hasher.update(self.samples.to_le_bytes());
        hasher.update(self.seed.to_le_bytes());
        for v in &self.norm_grid {
            hasher.update(v.to_le_bytes());
        }
        hasher.update(self.delta.to_le_bytes());
        hasher.update(self.dt.to_le_bytes());
        for row in &self.values {
            for v in row {
                hasher.update(v.to_le_bytes());
            }
        }
        hex::encode(&hasher.finalize()[..16])
    }

    /// Serializes to a self-describing JSON document with an integrity
    /// checksum. The encoding is deterministic: rebuilding an identical
    /// table yields identical bytes.
    pub fn to_json(&self) -> String {
        let doc = TableFile {
            format: TABLE_FORMAT.to_string(),
            checksum: self.payload_checksum(),
            table: self.clone(),
        };
        serde_json::to_string_pretty(&doc).expect("table serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: TableFile =
            serde_json::from_str(text).map_err(|e| Error::Table(format!("unreadable table file: {e}")))?;
        if doc.format != TABLE_FORMAT {
            return Err(Error::Table(format!("unsupported table format '{}'", doc.format)));
        }
        let expect = doc.table.payload_checksum();
        if doc.checksum != expect {
            return Err(Error::Table(
                "checksum mismatch: table file is corrupted".to_string(),
            ));
        }
        Ok(doc.table)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }
}

const TABLE_FORMAT: &str = "ptsim-exit-table-v1";

#[derive(Serialize, Deserialize)]
struct TableFile {
    format: String,
    checksum: String,
    table: ExitProbTable,
}

/// Builds the exit-probability table by Monte Carlo.
///
/// For each grid norm `r`, `samples` trajectories start from initial errors
/// drawn uniformly on the sphere of radius `r` (the origin when `r = 0`)
/// and the empirical fraction exited by each step is recorded cumulatively,
/// which makes every row nondecreasing in the step axis by construction.
///
/// Grid points are processed in parallel; each owns a random substream
/// derived from `(seed, grid index)`, so the result does not depend on the
/// number of threads.
pub fn build_exit_table(
    spec: &ErrorProcessSpec,
    grid_size: usize,
    max_steps: usize,
    samples: usize,
    seed: u64,
) -> Result<ExitProbTable> {
    spec.validate()?;
    if grid_size < 2 {
        return Err(Error::config("grid_size must be at least 2"));
    }
    if max_steps < 1 {
        return Err(Error::config("max_steps must be at least 1"));
    }
    if samples < 1 {
        return Err(Error::config("samples must be at least 1"));
    }
    let sim = ExitSimulator::new(spec)?;
    let n = spec.a_cl.nrows();
    let delta = spec.delta;
    let norm_grid: Vec<f64> = (0..grid_size)
        .map(|g| delta * g as f64 / (grid_size - 1) as f64)
        .collect();

    let values: Vec<Vec<f64>> = norm_grid
        .par_iter()
        .enumerate()
        .map(|(g, &r)| {
            let mut rng = rng::stream(seed, &[tag::TABLE, g as u64]);
            let mut exit_counts = vec![0u64; max_steps + 1];
            for _ in 0..samples {
                let direction = linalg::standard_normal_vector(n, &mut rng);
                let z0 = if r == 0.0 {
                    DVector::zeros(n)
                } else {
                    &direction * (r / direction.norm())
                };
                if let Some(m) = sim.simulate_exit(&z0, max_steps, &mut rng) {
                    exit_counts[m] += 1;
                }
            }
            let mut row = Vec::with_capacity(max_steps + 1);
            let mut cumulative = 0u64;
            for count in exit_counts {
                cumulative += count;
                row.push(cumulative as f64 / samples as f64);
            }
            row
        })
        .collect();

    Ok(ExitProbTable {
        norm_grid,
        max_steps,
        delta,
        dt: spec.dt,
        samples,
        seed,
        values,
        spec_fingerprint: spec.fingerprint(samples, seed),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn scalar_spec(a: f64, sigma: f64, delta: f64) -> ErrorProcessSpec {
        ErrorProcessSpec {
            a_cl: DMatrix::from_element(1, 1, a),
            sigma_w: DMatrix::from_element(1, 1, sigma * sigma),
            delta,
            dt: 0.01,
        }
    }

    #[test]
    fn exit_from_outside_is_step_zero() {
        let spec = scalar_spec(0.9, 0.1, 0.05);
        let mut rng = rng::stream(1, &[0]);
        let got = simulate_exit(&spec, &DVector::from_element(1, 0.06), 10, &mut rng).unwrap();
        assert_eq!(got, Some(0));
    }

    #[test]
    fn zero_noise_stable_never_exits() {
        let spec = scalar_spec(0.9, 0.0, 0.05);
        let mut rng = rng::stream(1, &[1]);
        let got = simulate_exit(&spec, &DVector::from_element(1, 0.01), 1000, &mut rng).unwrap();
        assert_eq!(got, None);
    }

    #[test]
    fn scalar_exit_fraction_matches_independent_resimulation() {
        // second, straightforward Monte-Carlo implementation as the oracle
        let (a, sigma, delta) = (0.9, 0.1, 0.05);
        let spec = scalar_spec(a, sigma, delta);
        let sim = ExitSimulator::new(&spec).unwrap();
        let runs = 100_000;
        let max_steps = 10;

        let mut rng = rng::stream(7, &[10]);
        let mut exited = 0usize;
        for _ in 0..runs {
            if sim
                .simulate_exit(&DVector::zeros(1), max_steps, &mut rng)
                .is_some()
            {
                exited += 1;
            }
        }
        let fraction = exited as f64 / runs as f64;

        use rand_distr::{Distribution, Normal};
        let normal = Normal::new(0.0, sigma).unwrap();
        let mut rng2 = rng::stream(8, &[11]);
        let mut exited2 = 0usize;
        for _ in 0..runs {
            let mut z = 0.0f64;
            for _ in 0..max_steps {
                z = a * z + normal.sample(&mut rng2);
                if z.abs() >= delta {
                    exited2 += 1;
                    break;
                }
            }
        }
        let oracle = exited2 as f64 / runs as f64;
        assert!(
            (fraction - oracle).abs() < 0.01,
            "fraction {fraction} vs oracle {oracle}"
        );
    }

    #[test]
    fn table_boundary_laws() {
        let spec = scalar_spec(0.9, 0.05, 0.1);
        let table = build_exit_table(&spec, 11, 20, 500, 3).unwrap();
        // interior row at zero steps is zero, boundary row is one everywhere
        assert_eq!(table.values[0][0], 0.0);
        for m in 0..=20 {
            assert_eq!(table.values[10][m], 1.0);
        }
        // monotone in the step axis, all values are probabilities
        for row in &table.values {
            for pair in row.windows(2) {
                assert!(pair[0] <= pair[1]);
            }
            for &v in row {
                assert!((0.0..=1.0).contains(&v));
            }
        }
    }

    #[test]
    fn tables_are_deterministic_and_thread_independent() {
        let spec = scalar_spec(0.8, 0.03, 0.05);
        let t1 = build_exit_table(&spec, 8, 15, 400, 42).unwrap();
        let t2 = build_exit_table(&spec, 8, 15, 400, 42).unwrap();
        assert_eq!(t1, t2);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let t3 = pool.install(|| build_exit_table(&spec, 8, 15, 400, 42)).unwrap();
        assert_eq!(t1, t3);
    }

    #[test]
    fn query_interpolates_linearly() {
        let table = ExitProbTable {
            norm_grid: vec![0.0, 1.0],
            max_steps: 1,
            delta: 1.0,
            dt: 0.01,
            samples: 1,
            seed: 0,
            values: vec![vec![0.0, 0.2], vec![1.0, 1.0]],
            spec_fingerprint: "test".to_string(),
        };
        // on-grid identity
        assert_relative_eq!(table.query_exit_probability(0.0, 1).unwrap(), 0.2);
        // midway between two grid points: arithmetic mean of stored values
        assert_relative_eq!(table.query_exit_probability(0.5, 1).unwrap(), 0.6);
        // outside the domain
        assert_relative_eq!(table.query_exit_probability(2.0, 1).unwrap(), 1.0);
        // step zero is the exact indicator, not interpolated
        assert_relative_eq!(table.query_exit_probability(0.999, 0).unwrap(), 0.0);
        assert_relative_eq!(table.query_exit_probability(1.0, 0).unwrap(), 1.0);
        // out-of-range step count
        assert!(table.query_exit_probability(0.5, 2).is_err());
    }

    #[test]
    fn json_roundtrip_and_corruption_detection() {
        let spec = scalar_spec(0.9, 0.02, 0.04);
        let table = build_exit_table(&spec, 5, 8, 200, 9).unwrap();
        let text = table.to_json();
        let back = ExitProbTable::from_json(&text).unwrap();
        assert_eq!(table, back);
        assert_eq!(text, back.to_json());
        let tampered = text.replace("\"max_steps\": 8", "\"max_steps\": 9");
        assert!(matches!(
            ExitProbTable::from_json(&tampered),
            Err(Error::Table(_))
        ));
    }

    #[test]
    fn fingerprint_tracks_spec_samples_and_seed() {
        let spec = scalar_spec(0.9, 0.02, 0.04);
        let base = spec.fingerprint(100, 1);
        assert_ne!(base, spec.fingerprint(101, 1));
        assert_ne!(base, spec.fingerprint(100, 2));
        let other = scalar_spec(0.91, 0.02, 0.04);
        assert_ne!(base, other.fingerprint(100, 1));
        assert_eq!(base, scalar_spec(0.9, 0.02, 0.04).fingerprint(100, 1));
    }

    #[test]
    fn nonfinite_spec_is_config_error() {
        let mut spec = scalar_spec(0.9, 0.02, 0.04);
        spec.a_cl[(0, 0)] = f64::NAN;
        assert!(build_exit_table(&spec, 4, 4, 10, 0).is_err());
    }

    #[test]
    fn unstable_spec_warns_but_builds() {
        let spec = scalar_spec(1.05, 0.02, 0.04);
        let warnings = spec.validate().unwrap();
        assert_eq!(warnings.len(), 1);
        assert!(build_exit_table(&spec, 4, 4, 10, 0).is_ok());
    }
}

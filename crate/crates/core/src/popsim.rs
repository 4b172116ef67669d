//! Forward simulation of the population with one immigrant per generation,
//! keeping descendant counts per immigrant. Serves as an oracle for the
//! closed-form clan probabilities.

use rand::Rng;
use rand_distr::{Distribution, Gamma, Geometric, Poisson};

use crate::env::offspring_params;
use crate::error::{Error, Result};
use crate::gfalgebra::Convention;
use crate::rng::StreamKey;
use crate::walk::WalkPath;

/// Largest clan size carried before a replicate is aborted.
pub const SIZE_CAP: u64 = 1 << 62;

/// `sizes[k]`: descendants alive at `generation` of the immigrant of generation `k`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClanVector {
    pub generation: usize,
    pub sizes: Vec<u64>,
}

impl ClanVector {
    /// Generation 0: the founder alone.
    pub fn founder() -> Self {
        ClanVector {
            generation: 0,
            sizes: vec![1],
        }
    }

    /// `Y_g^-`: clans born before the current generation.
    pub fn minus_view(&self) -> &[u64] {
        &self.sizes[..self.generation]
    }

    /// `Y_g`.
    pub fn total(&self) -> u128 {
        self.sizes.iter().map(|&z| z as u128).sum()
    }
}

/// Total offspring of `z` individuals with `Geometric(q)` offspring on `{0, 1, ...}`.
fn total_offspring<R: Rng + ?Sized>(z: u64, x: f64, q: f64, rng: &mut R, generation: usize) -> Result<u64> {
    if z == 0 {
        return Ok(0);
    }
    let draw = if z == 1 {
        Geometric::new(q)
            .map_err(|_| Error::Overflow { generation })?
            .sample(rng) as f64
    } else {
        // negative binomial as a gamma mixture of Poisson laws
        let lambda = Gamma::new(z as f64, x.exp())
            .map_err(|e| Error::Numeric(format!("gamma mixture: {e}")))?
            .sample(rng);
        if lambda >= SIZE_CAP as f64 {
            return Err(Error::Overflow { generation });
        }
        if lambda <= 0.0 {
            0.0
        } else {
            Poisson::new(lambda)
                .map_err(|e| Error::Numeric(format!("poisson mixture: {e}")))?
                .sample(rng)
        }
    };
    if !(draw < SIZE_CAP as f64) {
        return Err(Error::Overflow { generation });
    }
    Ok(draw as u64)
}

/// Reproduction with mean `e^x` in every clan, then one immigrant.
pub fn step_generation<R: Rng + ?Sized>(clans: &ClanVector, x: f64, rng: &mut R) -> Result<ClanVector> {
    let q = offspring_params(x)?.q;
    let generation = clans.generation + 1;
    let mut sizes = Vec::with_capacity(clans.sizes.len() + 1);
    for &z in &clans.sizes {
        sizes.push(total_offspring(z, x, q, rng, generation)?);
    }
    sizes.push(1);
    Ok(ClanVector { generation, sizes })
}

/// Runs the population through the environment `path` from the founder.
pub fn simulate_population<R: Rng + ?Sized>(path: &WalkPath, rng: &mut R) -> Result<ClanVector> {
    if path.n() == 0 {
        return Err(Error::domain("population horizon must be at least 1"));
    }
    let mut clans = ClanVector::founder();
    for &x in path.increments() {
        clans = step_generation(&clans, x, rng)?;
    }
    Ok(clans)
}

/// Whether clan `i` is the only surviving one at the current generation;
/// the founder's clan is ignored for `i >= 1` under the corollary convention.
pub fn event_indicator(clans: &ClanVector, i: usize, convention: Convention) -> Result<bool> {
    let n = clans.generation;
    if i >= n {
        return Err(Error::domain(format!("clan index i = {i} outside [0, {}]", n as i64 - 1)));
    }
    let view = clans.minus_view();
    if view[i] == 0 {
        return Ok(false);
    }
    let from = match convention {
        Convention::Strict => 0,
        Convention::PaperCorollary => 1,
    };
    Ok((from..n).filter(|&k| k != i).all(|k| view[k] == 0))
}

/// Event counts over replicated populations on one frozen environment.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OracleCounts {
    pub reps: u64,
    /// `strict[i]`: replicates in which only clan `i` survives.
    pub strict: Vec<u64>,
    pub paper: Vec<u64>,
    /// `Y_n^- = 0`.
    pub none: u64,
    /// At least two of the clans `0..n-1` survive.
    pub multi: u64,
}

impl OracleCounts {
    /// Frequency and binomial standard error for `count`.
    pub fn freq(&self, count: u64) -> (f64, f64) {
        let f = count as f64 / self.reps as f64;
        (f, (f * (1.0 - f) / self.reps as f64).sqrt())
    }

    pub fn event(&self, i: usize, convention: Convention) -> (f64, f64) {
        match convention {
            Convention::Strict => self.freq(self.strict[i]),
            Convention::PaperCorollary => self.freq(self.paper[i]),
        }
    }
}

/// Classifies `reps` independent population runs on `path`, all events at once.
pub fn oracle_counts(path: &WalkPath, reps: u64, key: StreamKey) -> Result<OracleCounts> {
    if reps == 0 {
        return Err(Error::domain("reps must be at least 1"));
    }
    let n = path.n();
    let mut rng = key.rng();
    let mut out = OracleCounts {
        reps,
        strict: vec![0; n],
        paper: vec![0; n],
        none: 0,
        multi: 0,
    };
    for _ in 0..reps {
        let clans = simulate_population(path, &mut rng)?;
        let view = clans.minus_view();
        let alive: Vec<usize> = (0..n).filter(|&k| view[k] > 0).collect();
        match alive.as_slice() {
            [] => out.none += 1,
            [i] => {
                out.strict[*i] += 1;
                out.paper[*i] += 1;
            }
            [0, i] => {
                out.multi += 1;
                out.paper[*i] += 1;
            }
            _ => out.multi += 1,
        }
    }
    Ok(out)
}

/// Frequency of "only clan `i` survives" over `reps` runs, with its binomial standard error.
pub fn oracle_event_frequency(
    path: &WalkPath,
    i: usize,
    convention: Convention,
    reps: u64,
    key: StreamKey,
) -> Result<(f64, f64)> {
    if i >= path.n() {
        return Err(Error::domain(format!("clan index i = {i} outside [0, {}]", path.n() - 1)));
    }
    Ok(oracle_counts(path, reps, key)?.event(i, convention))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::IncrementLaw;
    use crate::gfalgebra::clan_prob;
    use crate::walk::simulate_path;

    fn flat(n: usize, x: f64) -> WalkPath {
        WalkPath::from_increments(vec![x; n]).unwrap()
    }

    #[test]
    fn step_bookkeeping() {
        let mut rng = StreamKey::root(1).rng();
        let c = ClanVector { generation: 2, sizes: vec![0, 4, 1] };
        let next = step_generation(&c, 0.3, &mut rng).unwrap();
        assert_eq!(next.generation, 3);
        assert_eq!(next.sizes[0], 0);
        assert_eq!(*next.sizes.last().unwrap(), 1);
        assert_eq!(next.sizes.len(), 4);
    }

    #[test]
    fn single_line_mean_is_one() {
        let mut rng = StreamKey::root(2).rng();
        let reps = 1_000_000;
        let mut sum = 0.0;
        for _ in 0..reps {
            sum += step_generation(&ClanVector::founder(), 0.0, &mut rng).unwrap().sizes[0] as f64;
        }
        let mean = sum / reps as f64;
        assert!((mean - 1.0).abs() < 0.006, "{mean}");
    }

    #[test]
    fn negative_binomial_moments() {
        // z = 5, x = ln 2: mean 10, variance z p / q^2 = 5 * (2/3) * 9 = 30
        let mut rng = StreamKey::root(3).rng();
        let x = 2f64.ln();
        let q = offspring_params(x).unwrap().q;
        let reps = 200_000;
        let draws: Vec<f64> = (0..reps).map(|_| total_offspring(5, x, q, &mut rng, 1).unwrap() as f64).collect();
        let mean = draws.iter().sum::<f64>() / reps as f64;
        let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (reps - 1) as f64;
        assert!((mean - 10.0).abs() < 5.0 * (30.0 / reps as f64).sqrt(), "{mean}");
        assert!((var / 30.0 - 1.0).abs() < 0.03, "{var}");
    }

    #[test]
    fn hostile_environment_kills_old_clans() {
        let path = flat(5, -30.0);
        let mut rng = StreamKey::root(4).rng();
        for _ in 0..100_000 {
            let c = simulate_population(&path, &mut rng).unwrap();
            assert_eq!(c.minus_view().len(), 5);
            assert!(c.minus_view()[..4].iter().all(|&z| z == 0));
            assert_eq!(c.total(), c.minus_view().iter().map(|&z| z as u128).sum::<u128>() + 1);
        }
    }

    #[test]
    fn indicator_examples() {
        let c = ClanVector { generation: 4, sizes: vec![0, 0, 3, 0, 1] };
        assert!(event_indicator(&c, 2, Convention::Strict).unwrap());
        assert!(event_indicator(&c, 2, Convention::PaperCorollary).unwrap());
        let c = ClanVector { generation: 4, sizes: vec![2, 0, 3, 0, 1] };
        assert!(!event_indicator(&c, 2, Convention::Strict).unwrap());
        assert!(event_indicator(&c, 2, Convention::PaperCorollary).unwrap());
        let c = ClanVector { generation: 4, sizes: vec![0, 0, 0, 0, 1] };
        for i in 0..4 {
            assert!(!event_indicator(&c, i, Convention::Strict).unwrap());
            assert!(!event_indicator(&c, i, Convention::PaperCorollary).unwrap());
        }
        assert!(event_indicator(&c, 4, Convention::Strict).is_err());
    }

    #[test]
    fn oracle_single_generation() {
        let path = flat(1, 0.0);
        let (f, se) = oracle_event_frequency(&path, 0, Convention::Strict, 1_000_000, StreamKey::root(5)).unwrap();
        assert!((f - 0.5).abs() < 4.0 * se.max(0.0005), "{f}");
    }

    #[test]
    fn oracle_flat_environment() {
        let path = flat(4, 0.0);
        let (f, se) = oracle_event_frequency(&path, 2, Convention::Strict, 1_000_000, StreamKey::root(6)).unwrap();
        assert!((f - 0.1).abs() < 4.0 * se, "{f} ± {se}");
        let exact = clan_prob(&path, 2, Convention::Strict).unwrap().value();
        assert!((exact - 0.1).abs() < 1e-15);
    }

    #[test]
    fn single_rep_is_degenerate() {
        let path = flat(3, 0.0);
        let (f, se) = oracle_event_frequency(&path, 1, Convention::Strict, 1, StreamKey::root(7)).unwrap();
        assert!(f == 0.0 || f == 1.0);
        assert_eq!(se, 0.0);
        assert!(oracle_event_frequency(&path, 1, Convention::Strict, 0, StreamKey::root(7)).is_err());
    }

    #[test]
    fn clans_are_independent_given_environment() {
        let law = IncrementLaw::gaussian(1.0).unwrap();
        let mut env_rng = StreamKey::root(8).rng();
        let reps = 100_000u64;
        for e in 0..5 {
            let path = simulate_path(&law, 5, &mut env_rng).unwrap();
            let mut rng = StreamKey::root(9).child(e).rng();
            let (mut d1, mut d2, mut d12) = (0u64, 0u64, 0u64);
            for _ in 0..reps {
                let c = simulate_population(&path, &mut rng).unwrap();
                let (a, b) = (c.sizes[1] == 0, c.sizes[3] == 0);
                d1 += a as u64;
                d2 += b as u64;
                d12 += (a && b) as u64;
            }
            let r = reps as f64;
            let (p1, p2, p12) = (d1 as f64 / r, d2 as f64 / r, d12 as f64 / r);
            let se = (p12 * (1.0 - p12) / r).sqrt() + (p1 * p2 * (1.0 - p1 * p2) / r).sqrt();
            assert!((p12 - p1 * p2).abs() <= 4.0 * se, "env {e}: {p12} vs {}", p1 * p2);
        }
    }

    #[test]
    fn clan_means_follow_the_walk() {
        let law = IncrementLaw::gaussian(0.5).unwrap();
        let path = simulate_path(&law, 6, &mut StreamKey::root(10).rng()).unwrap();
        let mut rng = StreamKey::root(11).rng();
        let reps = 200_000;
        let n = path.n();
        let mut sum = vec![0.0; n];
        let mut sq = vec![0.0; n];
        for _ in 0..reps {
            let c = simulate_population(&path, &mut rng).unwrap();
            for k in 0..n {
                let z = c.sizes[k] as f64;
                sum[k] += z;
                sq[k] += z * z;
            }
        }
        for k in 0..n {
            let m = sum[k] / reps as f64;
            let se = ((sq[k] / reps as f64 - m * m) / reps as f64).sqrt();
            let want = (path.s(n) - path.s(k)).exp();
            assert!((m - want).abs() <= 5.0 * se, "clan {k}: {m} vs {want}");
        }
    }
}

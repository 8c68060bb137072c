//! Built-in test objectives. All are maximized: classic minimization
//! benchmarks are negated.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::agbo::{Concurrency, Objective, ObjectiveError};
use crate::space::{Choice, Dimension, SearchSpace};

/// Batch sizes offered by the mock tuning space.
pub const MOCK_BATCH_SIZES: [i64; 4] = [8, 16, 32, 64];
/// Planted optimum of the mock tuning objective: batch size, epochs,
/// learning rate.
pub const MOCK_OPTIMUM: (i64, i64, f64) = (8, 80, 1e-4);

pub const BRANIN_MIN: f64 = 0.397_887_357_729_738;
pub const HARTMANN6_MIN: f64 = -3.322_368_011_415_51;
pub const HARTMANN6_ARGMIN: [f64; 6] = [0.20169, 0.150011, 0.476874, 0.275332, 0.311652, 0.6573];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Benchmark {
    Sphere { dims: usize },
    Branin,
    Rastrigin { dims: usize },
    Hartmann6,
    MockTuning,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KnownBest {
    pub fitness: f64,
    pub location: Vec<f64>,
}

impl Benchmark {
    pub const NAMES: [&'static str; 5] =
        ["sphere", "branin", "rastrigin", "hartmann6", "mock-tuning"];

    /// Looks up a benchmark by name; `dims` sizes the variable-dimension
    /// ones (sphere defaults to 3, rastrigin to 2).
    pub fn from_name(name: &str, dims: Option<usize>) -> Option<Self> {
        Some(match name {
            "sphere" => Benchmark::Sphere {
                dims: dims.unwrap_or(3),
            },
            "branin" => Benchmark::Branin,
            "rastrigin" => Benchmark::Rastrigin {
                dims: dims.unwrap_or(2),
            },
            "hartmann6" => Benchmark::Hartmann6,
            "mock-tuning" => Benchmark::MockTuning,
            _ => return None,
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Benchmark::Sphere { .. } => "sphere",
            Benchmark::Branin => "branin",
            Benchmark::Rastrigin { .. } => "rastrigin",
            Benchmark::Hartmann6 => "hartmann6",
            Benchmark::MockTuning => "mock-tuning",
        }
    }

    pub fn dims(&self) -> usize {
        match self {
            Benchmark::Sphere { dims } | Benchmark::Rastrigin { dims } => *dims,
            Benchmark::Branin => 2,
            Benchmark::Hartmann6 => 6,
            Benchmark::MockTuning => 3,
        }
    }

    /// Canonical search space.
    pub fn space(&self) -> SearchSpace {
        let dims = match self {
            Benchmark::Sphere { dims } => vec![Dimension::continuous(-5.0, 5.0); *dims],
            Benchmark::Rastrigin { dims } => vec![Dimension::continuous(-5.12, 5.12); *dims],
            Benchmark::Branin => vec![
                Dimension::continuous(-5.0, 10.0).named("x1"),
                Dimension::continuous(0.0, 15.0).named("x2"),
            ],
            Benchmark::Hartmann6 => vec![Dimension::continuous(0.0, 1.0); 6],
            Benchmark::MockTuning => vec![
                Dimension::categorical(MOCK_BATCH_SIZES.iter().map(|&b| Choice::Int(b)).collect())
                    .named("batch_size"),
                Dimension::integer(10, 100).named("epochs"),
                Dimension::log(1e-5, 1e-2).named("learning_rate"),
            ],
        };
        SearchSpace::new(dims).expect("canonical spaces are valid")
    }

    pub fn known_best(&self) -> KnownBest {
        match self {
            Benchmark::Sphere { dims } | Benchmark::Rastrigin { dims } => KnownBest {
                fitness: 0.0,
                location: vec![0.0; *dims],
            },
            Benchmark::Branin => KnownBest {
                fitness: -BRANIN_MIN,
                location: vec![PI, 2.275],
            },
            Benchmark::Hartmann6 => KnownBest {
                fitness: -HARTMANN6_MIN,
                location: HARTMANN6_ARGMIN.to_vec(),
            },
            Benchmark::MockTuning => KnownBest {
                fitness: 0.0,
                location: vec![MOCK_OPTIMUM.0 as f64, MOCK_OPTIMUM.1 as f64, MOCK_OPTIMUM.2],
            },
        }
    }

    fn in_domain(&self, x: &[f64]) -> bool {
        if x.len() != self.dims() || x.iter().any(|v| !v.is_finite()) {
            return false;
        }
        match self {
            Benchmark::Sphere { .. } => x.iter().all(|v| (-5.0..=5.0).contains(v)),
            Benchmark::Rastrigin { .. } => x.iter().all(|v| (-5.12..=5.12).contains(v)),
            Benchmark::Branin => (-5.0..=10.0).contains(&x[0]) && (0.0..=15.0).contains(&x[1]),
            Benchmark::Hartmann6 => x.iter().all(|v| (0.0..=1.0).contains(v)),
            Benchmark::MockTuning => {
                MOCK_BATCH_SIZES.iter().any(|&b| b as f64 == x[0])
                    && x[1].fract() == 0.0
                    && (10.0..=100.0).contains(&x[1])
                    && (1e-5..=1e-2).contains(&x[2])
            }
        }
    }

    /// Fitness at `x`; higher is better.
    pub fn eval(&self, x: &[f64]) -> Result<f64, ObjectiveError> {
        if !self.in_domain(x) {
            return Err(ObjectiveError::OutOfDomain(format!(
                "{}: {x:?}",
                self.name()
            )));
        }
        Ok(match self {
            Benchmark::Sphere { .. } => -sphere(x),
            Benchmark::Branin => -branin(x[0], x[1]),
            Benchmark::Rastrigin { .. } => -rastrigin(x),
            Benchmark::Hartmann6 => -hartmann6(x),
            Benchmark::MockTuning => mock_tuning_objective(x[0], x[1], x[2]),
        })
    }
}

impl fmt::Display for Benchmark {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Benchmark {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Benchmark::from_name(s, None).ok_or_else(|| {
            format!(
                "unknown objective '{s}' (expected one of {})",
                Benchmark::NAMES.join(", ")
            )
        })
    }
}

impl Objective for Benchmark {
    fn name(&self) -> &str {
        Benchmark::name(self)
    }

    fn arity(&self) -> usize {
        self.dims()
    }

    fn evaluate(&self, x: &[f64]) -> Result<f64, ObjectiveError> {
        self.eval(x)
    }

    fn concurrency(&self) -> Concurrency {
        Concurrency::ParallelSafe
    }
}

pub fn eval_benchmark(b: &Benchmark, x: &[f64]) -> Result<f64, ObjectiveError> {
    b.eval(x)
}

pub fn sphere(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

pub fn branin(x1: f64, x2: f64) -> f64 {
    let b = 5.1 / (4.0 * PI * PI);
    let c = 5.0 / PI;
    let t = 1.0 / (8.0 * PI);
    (x2 - b * x1 * x1 + c * x1 - 6.0).powi(2) + 10.0 * (1.0 - t) * x1.cos() + 10.0
}

pub fn rastrigin(x: &[f64]) -> f64 {
    10.0 * x.len() as f64
        + x.iter()
            .map(|v| v * v - 10.0 * (2.0 * PI * v).cos())
            .sum::<f64>()
}

const H6_ALPHA: [f64; 4] = [1.0, 1.2, 3.0, 3.2];
const H6_A: [[f64; 6]; 4] = [
    [10.0, 3.0, 17.0, 3.5, 1.7, 8.0],
    [0.05, 10.0, 17.0, 0.1, 8.0, 14.0],
    [3.0, 3.5, 1.7, 10.0, 17.0, 8.0],
    [17.0, 8.0, 0.05, 10.0, 0.1, 14.0],
];
const H6_P: [[f64; 6]; 4] = [
    [0.1312, 0.1696, 0.5569, 0.0124, 0.8283, 0.5886],
    [0.2329, 0.4135, 0.8307, 0.3736, 0.1004, 0.9991],
    [0.2348, 0.1451, 0.3522, 0.2883, 0.3047, 0.6650],
    [0.4047, 0.8828, 0.8732, 0.5743, 0.1091, 0.0381],
];

pub fn hartmann6(x: &[f64]) -> f64 {
    -(0..4)
        .map(|i| {
            let inner: f64 = (0..6)
                .map(|j| H6_A[i][j] * (x[j] - H6_P[i][j]).powi(2))
                .sum();
            H6_ALPHA[i] * (-inner).exp()
        })
        .sum::<f64>()
}

/// Separable concave bowl over (log2 batch size, epochs / 40, log10 lr)
/// peaking at exactly 0 at [`MOCK_OPTIMUM`].
pub fn mock_tuning_objective(batch_size: f64, epochs: f64, lr: f64) -> f64 {
    -((batch_size.log2() - 3.0).powi(2)
        + ((epochs - 80.0) / 40.0).powi(2)
        + (lr.log10() + 4.0).powi(2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::sample_uniform;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn analytic_optima() {
        let s = Benchmark::Sphere { dims: 3 };
        assert_eq!(s.eval(&[0.0; 3]).unwrap(), 0.0);
        let r = Benchmark::Rastrigin { dims: 2 };
        assert_eq!(r.eval(&[0.0; 2]).unwrap(), 0.0);
        assert!((Benchmark::Branin.eval(&[PI, 2.275]).unwrap() + 0.397887).abs() < 1e-6);
        assert!((Benchmark::Hartmann6.eval(&HARTMANN6_ARGMIN).unwrap() - 3.32237).abs() < 1e-5);
    }

    #[test]
    fn out_of_domain() {
        assert!(Benchmark::Sphere { dims: 3 }
            .eval(&[6.0, 0.0, 0.0])
            .is_err());
        assert!(Benchmark::Branin.eval(&[0.0, -1.0]).is_err());
        assert!(Benchmark::MockTuning.eval(&[12.0, 80.0, 1e-4]).is_err());
        assert!(Benchmark::MockTuning.eval(&[8.0, 80.5, 1e-4]).is_err());
        assert!(Benchmark::Sphere { dims: 3 }.eval(&[0.0; 2]).is_err());
    }

    #[test]
    fn branin_dense_grid() {
        // 2000 x 2000 grid over the canonical domain
        let n = 2000;
        let mut best = f64::INFINITY;
        for i in 0..n {
            let x1 = -5.0 + 15.0 * i as f64 / (n - 1) as f64;
            for j in 0..n {
                let x2 = 15.0 * j as f64 / (n - 1) as f64;
                best = best.min(branin(x1, x2));
            }
        }
        assert!(best >= BRANIN_MIN - 1e-12);
        assert!((best - 0.397887).abs() < 1e-3, "{best}");
    }

    #[test]
    fn hartmann6_refines_to_published_minimum() {
        // coordinate-wise golden-section refinement from the published argmin
        let mut x = HARTMANN6_ARGMIN;
        for _ in 0..20 {
            for d in 0..6 {
                let (mut a, mut b) = ((x[d] - 0.05).max(0.0), (x[d] + 0.05).min(1.0));
                let g = (5f64.sqrt() - 1.0) / 2.0;
                for _ in 0..60 {
                    let c = b - g * (b - a);
                    let e = a + g * (b - a);
                    let mut xc = x;
                    xc[d] = c;
                    let mut xe = x;
                    xe[d] = e;
                    if hartmann6(&xc) < hartmann6(&xe) {
                        b = e;
                    } else {
                        a = c;
                    }
                }
                x[d] = 0.5 * (a + b);
            }
        }
        let v = hartmann6(&x);
        assert!((v - (-3.32237)).abs() < 1e-5, "{v}");
        assert!((v - HARTMANN6_MIN).abs() < 1e-9);
    }

    #[test]
    fn mock_tuning_values() {
        assert_eq!(mock_tuning_objective(8.0, 80.0, 1e-4), 0.0);
        assert!((mock_tuning_objective(16.0, 80.0, 1e-4) + 1.0).abs() < 1e-12);
        assert!((mock_tuning_objective(8.0, 40.0, 1e-4) + 1.0).abs() < 1e-12);
        assert_eq!(Benchmark::MockTuning.eval(&[8.0, 80.0, 1e-4]).unwrap(), 0.0);
    }

    #[test]
    fn known_best_dominates_random_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for name in Benchmark::NAMES {
            let b = Benchmark::from_name(name, None).unwrap();
            let best = b.known_best();
            assert!(b.in_domain(&best.location));
            assert!((b.eval(&best.location).unwrap() - best.fitness).abs() < 1e-6);
            let space = b.space();
            for _ in 0..100_000 {
                let c = sample_uniform(&space, &mut rng);
                let f = b.eval(&space.decode(&c)).unwrap();
                assert!(f <= best.fitness + 1e-9, "{name}: {f}");
            }
        }
    }

    #[test]
    fn names_roundtrip() {
        for name in Benchmark::NAMES {
            let b: Benchmark = name.parse().unwrap();
            assert_eq!(b.to_string(), name);
        }
        assert!("nope".parse::<Benchmark>().is_err());
    }
}

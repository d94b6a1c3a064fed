//! Reference optimizers sharing the sizing pipeline: uniform random search
//! and a (μ, λ) evolution strategy with elitism.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::agent::{streams, sub_rng, warmup_sample};
use crate::params::ActionMatrix;
use crate::pipeline::{Incumbent, PipelineError, SearchResult, SearchTrace, SizingProblem};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SearchError {
    #[error("invalid search configuration: {0}")]
    Config(String),
    #[error("all {0} evaluations failed")]
    AllFailed(usize),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

struct Recorder {
    trace: SearchTrace,
    incumbent: Incumbent,
    failures: usize,
}

impl Recorder {
    fn new() -> Self {
        Self {
            trace: SearchTrace::new(),
            incumbent: Incumbent::default(),
            failures: 0,
        }
    }

    fn evaluate(&mut self, problem: &mut SizingProblem<'_>, raw: &ActionMatrix) -> Result<f64, SearchError> {
        let eval = problem.evaluate(raw)?;
        if !eval.succeeded() {
            self.failures += 1;
        }
        self.trace.push(eval.fom, &eval.design);
        self.incumbent.offer(eval.fom, &eval.design, raw);
        Ok(eval.fom)
    }

    fn finish(self) -> Result<SearchResult, SearchError> {
        let steps = self.trace.len();
        if self.failures == steps {
            return Err(SearchError::AllFailed(steps));
        }
        let (best_fom, best_design, best_raw) = self.incumbent.best.expect("at least one evaluation");
        Ok(SearchResult {
            best_design,
            best_raw,
            best_fom,
            trace: self.trace,
        })
    }
}

/// `steps` uniformly random designs; uses the same random stream as the
/// agent's warm-up for a given seed.
pub fn random_search(problem: &mut SizingProblem<'_>, steps: usize, seed: u64) -> Result<SearchResult, SearchError> {
    if steps == 0 {
        return Err(SearchError::Config("random search needs at least one step".into()));
    }
    let mut rng = sub_rng(seed, streams::WARMUP);
    let mut rec = Recorder::new();
    for _ in 0..steps {
        let raw = warmup_sample(problem.topology, &mut rng);
        rec.evaluate(problem, &raw)?;
    }
    rec.finish()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EsConfig {
    pub mu: usize,
    pub lambda: usize,
    /// Mutation std in normalized action units.
    pub sigma: f64,
    pub seed: u64,
}

impl Default for EsConfig {
    fn default() -> Self {
        Self {
            mu: 8,
            lambda: 32,
            sigma: 0.2,
            seed: 0,
        }
    }
}

/// (μ, λ) evolution strategy over raw actions. Each generation draws λ
/// Gaussian mutations of the μ parents (round-robin), keeps the best μ
/// offspring and re-inserts the incumbent if it was lost.
pub fn es_optimize(problem: &mut SizingProblem<'_>, steps: usize, config: EsConfig) -> Result<SearchResult, SearchError> {
    let EsConfig { mu, lambda, sigma, seed } = config;
    if mu == 0 || mu > lambda {
        return Err(SearchError::Config(format!("need 1 <= mu <= lambda, got mu={mu}, lambda={lambda}")));
    }
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(SearchError::Config(format!("mutation std must be >= 0, got {sigma}")));
    }
    if steps < lambda {
        return Err(SearchError::Config(format!("budget {steps} is smaller than lambda={lambda}")));
    }
    let mut rng = sub_rng(seed, streams::SEARCH);
    let mut rec = Recorder::new();

    let mut population: Vec<(f64, ActionMatrix)> = Vec::with_capacity(lambda);
    for _ in 0..lambda {
        let raw = warmup_sample(problem.topology, &mut rng);
        let fom = rec.evaluate(problem, &raw)?;
        population.push((fom, raw));
    }
    let mut parents = select(population, mu);
    let mut incumbent = parents[0].clone();

    while rec.trace.len() < steps {
        let mut offspring = Vec::with_capacity(lambda);
        for i in 0..lambda {
            if rec.trace.len() >= steps {
                break;
            }
            let parent = &parents[i % parents.len()].1;
            let child = ActionMatrix(
                parent
                    .rows()
                    .iter()
                    .map(|row| {
                        row.iter()
                            .map(|v| {
                                let z: f64 = rng.sample(StandardNormal);
                                (v + sigma * z).clamp(-1.0, 1.0)
                            })
                            .collect()
                    })
                    .collect(),
            );
            let fom = rec.evaluate(problem, &child)?;
            offspring.push((fom, child));
        }
        if offspring.is_empty() {
            break;
        }
        parents = select(offspring, mu);
        if parents[0].0 > incumbent.0 {
            incumbent = parents[0].clone();
        } else if !parents.iter().any(|p| p.1 == incumbent.1) {
            let last = parents.len() - 1;
            parents[last] = incumbent.clone();
            parents.sort_by(|a, b| b.0.total_cmp(&a.0));
        }
    }
    rec.finish()
}

/// Best `mu` by FoM, ties broken by evaluation order.
fn select(mut pool: Vec<(f64, ActionMatrix)>, mu: usize) -> Vec<(f64, ActionMatrix)> {
    pool.sort_by(|a, b| b.0.total_cmp(&a.0));
    pool.truncate(mu);
    pool
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::tests::{test_tech, ten_component_topology};
    use crate::fom::{FomConfig, MetricSpec};
    use crate::pipeline::design_hash;
    use crate::sim::{BenchmarkKind, SyntheticBenchmark};
    use alloc::vec;

    fn fom() -> FomConfig {
        FomConfig::new(vec![MetricSpec::new("Score", 1.0, -1.0, 0.0)], vec![], -1.0).unwrap()
    }

    #[test]
    fn random_search_is_seeded_and_monotone() {
        let t = ten_component_topology();
        let tech = test_tech();
        let bench = SyntheticBenchmark::with_random_target(BenchmarkKind::Sphere, 0.0, &t, &tech, 0).unwrap();
        let f = fom();
        let run = |seed| {
            let mut p = SizingProblem::new(&t, &tech, &bench, &f).unwrap();
            random_search(&mut p, 50, seed).unwrap()
        };
        let a = run(3);
        assert_eq!(a, run(3));
        assert_eq!(a.trace.len(), 50);
        assert!(a.trace.steps.windows(2).all(|w| w[1].best_fom >= w[0].best_fom));
        assert_eq!(a.best_fom, a.trace.best_fom().unwrap());
    }

    #[test]
    fn es_without_mutation_is_stationary() {
        let t = ten_component_topology();
        let tech = test_tech();
        let bench = SyntheticBenchmark::with_random_target(BenchmarkKind::Sphere, 0.0, &t, &tech, 0).unwrap();
        let f = fom();
        let mut p = SizingProblem::new(&t, &tech, &bench, &f).unwrap();
        let cfg = EsConfig {
            mu: 1,
            lambda: 1,
            sigma: 0.0,
            seed: 1,
        };
        let r = es_optimize(&mut p, 20, cfg).unwrap();
        let first = &r.trace.steps[0].design_hash;
        assert!(r.trace.steps.iter().all(|s| &s.design_hash == first));
        assert_eq!(design_hash(&r.best_design), *first);
    }

    #[test]
    fn es_keeps_incumbent_and_improves() {
        let t = ten_component_topology();
        let tech = test_tech();
        let bench = SyntheticBenchmark::with_random_target(BenchmarkKind::Sphere, 0.0, &t, &tech, 2).unwrap();
        let f = fom();
        let mut p = SizingProblem::new(&t, &tech, &bench, &f).unwrap();
        let r = es_optimize(&mut p, 640, EsConfig::default()).unwrap();
        let after_first_gen = r.trace.steps[31].best_fom;
        assert!(r.best_fom > after_first_gen);
        assert_eq!(p.evaluations(), 640);
    }

    #[test]
    fn es_rejects_bad_config() {
        let t = ten_component_topology();
        let tech = test_tech();
        let bench = SyntheticBenchmark::with_random_target(BenchmarkKind::Sphere, 0.0, &t, &tech, 2).unwrap();
        let f = fom();
        let mut p = SizingProblem::new(&t, &tech, &bench, &f).unwrap();
        let bad = EsConfig {
            mu: 5,
            lambda: 4,
            ..EsConfig::default()
        };
        assert!(matches!(es_optimize(&mut p, 100, bad), Err(SearchError::Config(_))));
        assert!(matches!(es_optimize(&mut p, 10, EsConfig::default()), Err(SearchError::Config(_))));
    }
}

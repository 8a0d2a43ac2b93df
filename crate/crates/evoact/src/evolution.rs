//! The generational loop and finalization protocol.
//!
//! Each generation keeps the best four individuals verbatim (with their
//! recorded fitness) and breeds the rest by rank selection, 80% crossover,
//! 5% shrink mutation, and static bloat control. Fitness is the validation
//! metric of a short training run (50 epochs max, patience 10) on a fresh
//! random validation split. After the last generation every member is
//! retrained for 100 epochs with checkpointing on the deterministic split;
//! the top ten are deduplicated, the best three are tested repeatedly on the
//! untouched test partition, and ReLU/ELU/SELU baselines run the same
//! protocol alongside them.
//!
//! Fitness evaluations inside a generation run in parallel; every evaluation
//! owns a pre-assigned random sub-stream, so results do not depend on the
//! worker count.

use ndarray::{Array2, Axis};
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::data::{base_order, partition_sizes, Dataset, Scaler, Scaling, SplitSpec, Targets};
use crate::genome::{bloat_control, crossover, mutate_shrink, Chromosome};
use crate::init::InitScheme;
use crate::nn::{
    self, metrics, Activation, FitnessMetric, MetricKind, NetworkSpec, TrainConfig, TrainedModel,
};
use crate::props::{analyze, population_fractions, PropertyFractions, PropertyVector};
use crate::rng::{derive, Stream, StreamAddress};

#[derive(Clone, Copy, Debug, Serialize)]
pub struct EvolutionConfig {
    pub population_size: usize,
    /// Breeding steps after the initial population; the run log counts the
    /// initial population as generation 0.
    pub generations: usize,
    pub elitism: usize,
    pub crossover_rate: f64,
    pub mutation_rate: f64,
    pub init_depth_min: usize,
    pub init_depth_max: usize,
    pub max_depth: usize,
    pub search_epochs: usize,
    pub search_patience: usize,
    pub final_epochs: usize,
    pub repeats: usize,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        Self {
            population_size: 100,
            generations: 50,
            elitism: 4,
            crossover_rate: 0.8,
            mutation_rate: 0.05,
            init_depth_min: 1,
            init_depth_max: 4,
            max_depth: 10,
            search_epochs: 50,
            search_patience: 10,
            final_epochs: 100,
            repeats: 30,
        }
    }
}

impl EvolutionConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.population_size == 0 {
            return Err("population_size must be at least 1".into());
        }
        if self.elitism > self.population_size {
            return Err(format!(
                "elitism {} exceeds population_size {}",
                self.elitism, self.population_size
            ));
        }
        for (name, rate) in [
            ("crossover_rate", self.crossover_rate),
            ("mutation_rate", self.mutation_rate),
        ] {
            if !(0.0..=1.0).contains(&rate) {
                return Err(format!("{name} must be within [0, 1], got {rate}"));
            }
        }
        if self.init_depth_min > self.init_depth_max {
            return Err("init_depth_min exceeds init_depth_max".into());
        }
        if self.init_depth_max > self.max_depth {
            return Err("init_depth_max exceeds max_depth".into());
        }
        if self.search_epochs == 0 || self.final_epochs == 0 {
            return Err("epoch budgets must be at least 1".into());
        }
        if self.search_patience == 0 {
            return Err("search_patience must be at least 1".into());
        }
        if self.repeats == 0 {
            return Err("repeats must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct EvaluatedIndividual {
    pub chromosome: Chromosome,
    pub fitness: f64,
    pub properties: PropertyVector,
}

/// Everything a fitness evaluation needs: the scaled feature matrix, the
/// fixed train/test boundary, and the network/training template.
#[derive(Clone, Debug)]
pub struct Problem {
    features: Array2<f64>,
    targets: Targets,
    /// Shuffled training pool; the deterministic validation block is its
    /// tail.
    train_pool: Vec<usize>,
    test_idx: Vec<usize>,
    n_train: usize,
    pub net: NetworkSpec,
    pub train_cfg: TrainConfig,
}

impl Problem {
    /// Fixes the train/test boundary with the spec's seeded shuffle, fits
    /// the scaler on the training pool only, and scales all rows with it.
    pub fn new(
        dataset: &Dataset,
        scaling: Scaling,
        split: &SplitSpec,
        mut net: NetworkSpec,
        mut train_cfg: TrainConfig,
    ) -> Result<Problem, String> {
        let n = dataset.n_rows();
        let (n_train, n_val, n_test) = partition_sizes(n, split);
        if n_train == 0 || n_val == 0 || n_test == 0 {
            return Err(format!(
                "dataset with {n} rows is too small for train/val/test sizes {n_train}/{n_val}/{n_test}"
            ));
        }
        let order = base_order(n, split);
        let test_idx = order[n - n_test..].to_vec();
        let train_pool = order[..n - n_test].to_vec();

        let pool_rows = dataset.features.select(Axis(0), &train_pool);
        let scaler = Scaler::fit(scaling, pool_rows.view());
        let features = scaler.transform(dataset.features.view());

        net.input_dim = dataset.n_features();
        net.output = nn::OutputKind::for_targets(&dataset.targets);
        net.validate()?;
        train_cfg.fitness_metric = FitnessMetric::for_targets(&dataset.targets);

        Ok(Problem {
            features,
            targets: dataset.targets.clone(),
            train_pool,
            test_idx,
            n_train,
            net,
            train_cfg,
        })
    }

    pub fn fitness_metric(&self) -> FitnessMetric {
        self.train_cfg.fitness_metric
    }

    fn subset(&self, idx: &[usize]) -> (Array2<f64>, Targets) {
        (self.features.select(Axis(0), idx), self.targets.select(idx))
    }

    /// Fresh random validation draw from the training pool.
    fn search_split(&self, rng: &mut Stream) -> (Vec<usize>, Vec<usize>) {
        use rand::seq::SliceRandom;
        let mut pool = self.train_pool.clone();
        pool.shuffle(rng);
        let train = pool[..self.n_train].to_vec();
        let val = pool[self.n_train..].to_vec();
        (train, val)
    }

    /// The fixed validation block: the tail of the shuffled training pool.
    fn deterministic_split(&self) -> (Vec<usize>, Vec<usize>) {
        (
            self.train_pool[..self.n_train].to_vec(),
            self.train_pool[self.n_train..].to_vec(),
        )
    }

    pub fn test_set(&self) -> (Array2<f64>, Targets) {
        self.subset(&self.test_idx)
    }
}

/// Samples one parent by linear rank: the worst individual has rank 1, the
/// best rank N, and selection probability is rank/sum-of-ranks. Ties keep
/// their evaluation order.
pub fn rank_select<'a>(
    population: &'a [EvaluatedIndividual],
    rng: &mut Stream,
) -> &'a EvaluatedIndividual {
    assert!(!population.is_empty(), "empty population");
    let n = population.len();
    // Ascending by fitness, stable, so equal fitness preserves evaluation
    // order; position i then holds rank i+1.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| population[a].fitness.total_cmp(&population[b].fitness));
    let total = n * (n + 1) / 2;
    let mut draw = rng.random_range(0..total) as i64;
    for (pos, &idx) in order.iter().enumerate() {
        draw -= (pos + 1) as i64;
        if draw < 0 {
            return &population[idx];
        }
    }
    unreachable!("rank weights sum to the draw bound")
}

fn evaluate(
    chromosome: Chromosome,
    problem: &Problem,
    cfg: &EvolutionConfig,
    master: u64,
    addr: &StreamAddress,
) -> EvaluatedIndividual {
    let mut split_rng = derive(master, &addr.child("val_split", 0));
    let (train_idx, val_idx) = problem.search_split(&mut split_rng);
    let (train_x, train_y) = problem.subset(&train_idx);
    let (val_x, val_y) = problem.subset(&val_idx);
    let train_cfg = TrainConfig {
        max_epochs: cfg.search_epochs,
        patience: Some(cfg.search_patience),
        checkpoint: false,
        ..problem.train_cfg
    };
    let trained = nn::train(
        &problem.net,
        &Activation::Tree(chromosome.tree.clone()),
        chromosome.init,
        (train_x.view(), &train_y),
        (val_x.view(), &val_y),
        &train_cfg,
        master,
        &addr.child("train", 0),
    );
    let properties = analyze(&chromosome.tree);
    EvaluatedIndividual {
        fitness: trained.validation_fitness,
        chromosome,
        properties,
    }
}

/// Initial random population, evaluated. Logged as generation 0.
pub fn initial_population(
    problem: &Problem,
    cfg: &EvolutionConfig,
    master: u64,
) -> Vec<EvaluatedIndividual> {
    let root = StreamAddress::root();
    let chromosomes: Vec<Chromosome> = (0..cfg.population_size)
        .map(|i| {
            let mut rng = derive(master, &root.child("init_pop", i as u64));
            Chromosome::random(&mut rng, cfg.init_depth_min, cfg.init_depth_max)
        })
        .collect();
    chromosomes
        .into_par_iter()
        .enumerate()
        .map(|(i, c)| {
            let addr = root.child("gen", 0).child("eval", i as u64);
            evaluate(c, problem, cfg, master, &addr)
        })
        .collect()
}

/// Indices of the population sorted best-first (stable on ties).
fn ranked_desc(population: &[EvaluatedIndividual]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..population.len()).collect();
    order.sort_by(|&a, &b| population[b].fitness.total_cmp(&population[a].fitness));
    order
}

/// One breeding step: elites carried verbatim with their recorded fitness,
/// offspring bred and evaluated under the search protocol.
pub fn step_generation(
    population: &[EvaluatedIndividual],
    problem: &Problem,
    cfg: &EvolutionConfig,
    master: u64,
    generation: u64,
) -> Vec<EvaluatedIndividual> {
    assert_eq!(population.len(), cfg.population_size);
    let root = StreamAddress::root();
    let order = ranked_desc(population);
    let elites: Vec<EvaluatedIndividual> = order[..cfg.elitism]
        .iter()
        .map(|&i| population[i].clone())
        .collect();

    let n_offspring = cfg.population_size - cfg.elitism;
    let mut breed_rng = derive(master, &root.child("breed", generation));
    let mut offspring: Vec<Chromosome> = Vec::with_capacity(n_offspring);
    while offspring.len() < n_offspring {
        let p1 = rank_select(population, &mut breed_rng);
        let p2 = rank_select(population, &mut breed_rng);
        let (c1, c2) = if breed_rng.random::<f64>() < cfg.crossover_rate {
            crossover(
                &p1.chromosome,
                &p2.chromosome,
                cfg.max_depth,
                &mut breed_rng,
            )
        } else {
            (p1.chromosome.clone(), p2.chromosome.clone())
        };
        for child in [c1, c2] {
            if offspring.len() == n_offspring {
                break; // odd offspring count: the last pair contributes one
            }
            let child = if breed_rng.random::<f64>() < cfg.mutation_rate {
                mutate_shrink(&child, &mut breed_rng)
            } else {
                child
            };
            // Shrink cannot deepen a tree, so this re-check is vacuous, but
            // it keeps the depth invariant locally obvious.
            let child = bloat_control(
                child,
                (&p1.chromosome, &p2.chromosome),
                cfg.max_depth,
                &mut breed_rng,
            );
            offspring.push(child);
        }
    }

    let evaluated: Vec<EvaluatedIndividual> = offspring
        .into_par_iter()
        .enumerate()
        .map(|(i, c)| {
            let addr = root
                .child("gen", generation)
                .child("eval", (cfg.elitism + i) as u64);
            evaluate(c, problem, cfg, master, &addr)
        })
        .collect();

    let mut next = elites;
    next.extend(evaluated);
    next
}

/// Per-generation log line.
#[derive(Clone, Debug, Serialize)]
pub struct GenerationStats {
    pub gen: u64,
    pub best_fitness: f64,
    pub mean_fitness: f64,
    pub property_fractions: PropertyFractions,
}

pub fn generation_stats(gen: u64, population: &[EvaluatedIndividual]) -> GenerationStats {
    let best = population
        .iter()
        .map(|e| e.fitness)
        .fold(f64::NEG_INFINITY, f64::max);
    let mean = population.iter().map(|e| e.fitness).sum::<f64>() / population.len() as f64;
    GenerationStats {
        gen,
        best_fitness: best,
        mean_fitness: mean,
        property_fractions: population_fractions(population.iter().map(|e| &e.properties)),
    }
}

#[derive(Clone, Debug)]
pub struct RunResult {
    pub generations: Vec<GenerationStats>,
    pub final_population: Vec<EvaluatedIndividual>,
}

/// Full search: initial population plus `cfg.generations` breeding steps.
/// `on_generation` fires once per evaluated population, initial included.
pub fn run(
    problem: &Problem,
    cfg: &EvolutionConfig,
    master: u64,
    mut on_generation: impl FnMut(&GenerationStats),
) -> RunResult {
    let mut population = initial_population(problem, cfg, master);
    let mut stats = Vec::with_capacity(cfg.generations + 1);
    let first = generation_stats(0, &population);
    on_generation(&first);
    stats.push(first);
    for g in 1..=cfg.generations as u64 {
        population = step_generation(&population, problem, cfg, master, g);
        let s = generation_stats(g, &population);
        on_generation(&s);
        stats.push(s);
    }
    RunResult {
        generations: stats,
        final_population: population,
    }
}

/// Mean/std plus the raw per-run samples of one metric.
#[derive(Clone, Debug)]
pub struct MetricSummary {
    pub kind: MetricKind,
    pub mean: f64,
    pub std: f64,
    pub samples: Vec<f64>,
}

/// One reported system: an evolved winner (with its tree) or a baseline.
#[derive(Clone, Debug)]
pub struct ReportEntry {
    pub label: String,
    pub tree: Option<String>,
    pub init: InitScheme,
    pub validation_fitness: f64,
    pub metrics: Vec<MetricSummary>,
    pub is_baseline: bool,
}

#[derive(Clone, Debug)]
pub struct FinalReport {
    pub entries: Vec<ReportEntry>,
}

/// The three baseline pairings reported next to the evolved winners.
pub const BASELINES: [(&str, InitScheme); 3] = [
    ("relu", InitScheme::GlorotUniform),
    ("elu", InitScheme::HeNormal),
    ("selu", InitScheme::LecunNormal),
];

pub fn baseline_activation(name: &str) -> Option<Activation> {
    match name {
        "relu" => Some(Activation::Relu),
        "elu" => Some(Activation::Elu),
        "selu" => Some(Activation::Selu),
        _ => None,
    }
}

fn final_train(
    problem: &Problem,
    cfg: &EvolutionConfig,
    activation: &Activation,
    init: InitScheme,
    master: u64,
    addr: &StreamAddress,
) -> TrainedModel {
    let (train_idx, val_idx) = problem.deterministic_split();
    let (train_x, train_y) = problem.subset(&train_idx);
    let (val_x, val_y) = problem.subset(&val_idx);
    let train_cfg = TrainConfig {
        max_epochs: cfg.final_epochs,
        patience: None,
        checkpoint: true,
        ..problem.train_cfg
    };
    nn::train(
        &problem.net,
        activation,
        init,
        (train_x.view(), &train_y),
        (val_x.view(), &val_y),
        &train_cfg,
        master,
        addr,
    )
}

/// One finalization-protocol training run, exposed so callers can inspect
/// its epoch history.
pub fn final_train_for_history(
    problem: &Problem,
    cfg: &EvolutionConfig,
    activation: &Activation,
    init: InitScheme,
    master: u64,
    addr: &StreamAddress,
) -> TrainedModel {
    final_train(problem, cfg, activation, init, master, addr)
}

/// Trains `repeats` times on the fixed split and collects test metrics per
/// run. A diverged run scores zero on classification metrics and +inf MSE.
pub fn repeated_test(
    problem: &Problem,
    cfg: &EvolutionConfig,
    activation: &Activation,
    init: InitScheme,
    master: u64,
    addr: &StreamAddress,
) -> Vec<MetricSummary> {
    let (test_x, test_y) = problem.test_set();
    let per_run: Vec<Vec<(MetricKind, f64)>> = (0..cfg.repeats as u64)
        .into_par_iter()
        .map(|r| {
            let model = final_train(
                problem,
                cfg,
                activation,
                init,
                master,
                &addr.child("run", r),
            );
            let outcome = if model.diverged {
                None
            } else {
                nn::predict(&model.model, &problem.net, activation, test_x.view()).ok()
            };
            match outcome {
                Some(out) => metrics(out.view(), &test_y).0,
                None => worst_metrics(&test_y),
            }
        })
        .collect();

    let kinds: Vec<MetricKind> = per_run[0].iter().map(|&(k, _)| k).collect();
    kinds
        .into_iter()
        .map(|kind| {
            let samples: Vec<f64> = per_run
                .iter()
                .map(|run| {
                    run.iter()
                        .find(|&&(k, _)| k == kind)
                        .map(|&(_, v)| v)
                        .expect("metric present in every run")
                })
                .collect();
            let (mean, std) = crate::stats::summarize(&samples);
            MetricSummary {
                kind,
                mean,
                std,
                samples,
            }
        })
        .collect()
}

fn worst_metrics(targets: &Targets) -> Vec<(MetricKind, f64)> {
    match targets {
        Targets::Binary(_) => vec![
            (MetricKind::Precision, 0.0),
            (MetricKind::Recall, 0.0),
            (MetricKind::F1, 0.0),
            (MetricKind::Accuracy, 0.0),
        ],
        Targets::Multiclass { .. } => vec![(MetricKind::CategoricalAccuracy, 0.0)],
        Targets::Regression(_) => vec![(MetricKind::Mse, f64::INFINITY)],
    }
}

/// Finalization: retrains every member of the final generation for the full
/// epoch budget on the deterministic split, keeps the distinct individuals
/// among the top ten, and reports the best three (ranked by that validation
/// fitness) next to the three baselines, each tested `repeats` times.
pub fn finalize(
    final_population: &[EvaluatedIndividual],
    problem: &Problem,
    cfg: &EvolutionConfig,
    master: u64,
) -> FinalReport {
    let root = StreamAddress::root();
    let refits: Vec<f64> = final_population
        .par_iter()
        .enumerate()
        .map(|(i, member)| {
            let addr = root.child("final_eval", i as u64);
            final_train(
                problem,
                cfg,
                &Activation::Tree(member.chromosome.tree.clone()),
                member.chromosome.init,
                master,
                &addr,
            )
            .validation_fitness
        })
        .collect();

    let mut order: Vec<usize> = (0..final_population.len()).collect();
    order.sort_by(|&a, &b| refits[b].total_cmp(&refits[a]));
    let mut distinct: Vec<usize> = Vec::new();
    for &i in order.iter().take(10) {
        let seen = distinct
            .iter()
            .any(|&j| final_population[j].chromosome == final_population[i].chromosome);
        if !seen {
            distinct.push(i);
        }
    }

    let mut entries = Vec::new();
    for (rank, &i) in distinct.iter().take(3).enumerate() {
        let member = &final_population[i];
        let activation = Activation::Tree(member.chromosome.tree.clone());
        let summaries = repeated_test(
            problem,
            cfg,
            &activation,
            member.chromosome.init,
            master,
            &root.child("test", rank as u64),
        );
        entries.push(ReportEntry {
            label: format!("f{}", rank + 1),
            tree: Some(member.chromosome.tree.to_string()),
            init: member.chromosome.init,
            validation_fitness: refits[i],
            metrics: summaries,
            is_baseline: false,
        });
    }

    for (b, (name, init)) in BASELINES.iter().enumerate() {
        let activation = baseline_activation(name).expect("known baseline");
        let summaries = repeated_test(
            problem,
            cfg,
            &activation,
            *init,
            master,
            &root.child("baseline", b as u64),
        );
        entries.push(ReportEntry {
            label: activation.label(),
            tree: None,
            init: *init,
            validation_fitness: f64::NAN,
            metrics: summaries,
            is_baseline: true,
        });
    }

    FinalReport { entries }
}

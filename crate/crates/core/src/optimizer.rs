//! Differential evolution (rand/1/bin) over template parameter vectors.
//!
//! Each generation builds one trial per row from a snapshot of the
//! population, projects it back onto the unit-norm structure, evaluates all
//! trials in parallel and then replaces a row iff its trial is strictly
//! better. Trials never see rows replaced earlier in the same generation.
//!
//! Random streams: the initial population uses `(seed, Population, 0)`,
//! trials of generation `G` use `(seed, Trial, G)`, and SER evaluations derive
//! their frame seed from `(seed, Evaluation, ·)`.

use rand::{Rng, RngCore};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::ChannelKind;
use crate::codebook::{pack_params, unpack_params, CodebookSet, ParamVector};
use crate::detector::MpaConfig;
use crate::montecarlo::{estimate_ser, Detection};
use crate::seed::{stream_rng, Domain};
use crate::structure::StructureTemplate;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeConfig {
    /// `S_P`
    pub population: usize,
    /// `D`, twice the number of complex parameters.
    pub dim: usize,
    /// Mutation scale `alpha`.
    pub alpha: f64,
    /// Crossover rate `C_r`.
    pub crossover: f64,
    /// `I_max`, generations after the initial population.
    pub max_iter: usize,
    /// Stop when the best value improved by less than this fraction over
    /// `plateau_window` generations; 0 disables the rule.
    pub plateau_eps: f64,
    pub plateau_window: usize,
    pub seed: u64,
}

impl DeConfig {
    /// `S_P = 20, C_r = 0.95, alpha = 0.6, I_max = 80` for a search of dimension `dim`.
    pub fn defaults(dim: usize, seed: u64) -> Self {
        Self {
            population: 20,
            dim,
            alpha: 0.6,
            crossover: 0.95,
            max_iter: 80,
            plateau_eps: 0.02,
            plateau_window: 5,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.population < 4 {
            return bad(format!("population size {} is below 4", self.population));
        }
        if self.dim == 0 || self.dim % 2 != 0 {
            return bad(format!("dimension {} must be even and positive", self.dim));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return bad(format!("scaling factor {} must be positive", self.alpha));
        }
        if !(0.0..=1.0).contains(&self.crossover) {
            return bad(format!("crossover rate {} is outside [0, 1]", self.crossover));
        }
        if self.plateau_eps.is_nan() || self.plateau_eps < 0.0 || self.plateau_window == 0 {
            return bad("plateau rule needs eps >= 0 and a window of at least one generation".into());
        }
        Ok(())
    }
}

/// Which frame streams a generation's SER evaluations use.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CrnPolicy {
    /// One stream set for the whole run; stored fitness values stay comparable
    /// and the best value can never increase.
    #[default]
    Fixed,
    /// Fresh streams every generation; surviving rows are re-evaluated.
    PerGeneration,
}

/// SER objective settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub ebn0_db: f64,
    pub channel: ChannelKind,
    pub frames: u64,
    pub mpa: MpaConfig,
    pub crn: CrnPolicy,
}

impl EvalConfig {
    pub fn new(ebn0_db: f64, channel: ChannelKind, frames: u64) -> Self {
        Self { ebn0_db, channel, frames, mpa: MpaConfig::default(), crn: CrnPolicy::Fixed }
    }
}

/// Function minimized by the search.
pub trait Objective: Sync {
    fn evaluate(&self, p: &ParamVector, generation: usize) -> Result<f64>;

    /// True when values from different generations are not comparable, so
    /// surviving rows must be re-evaluated.
    fn resamples(&self) -> bool {
        false
    }
}

impl<F> Objective for F
where
    F: Fn(&ParamVector, usize) -> Result<f64> + Sync,
{
    fn evaluate(&self, p: &ParamVector, generation: usize) -> Result<f64> {
        self(p, generation)
    }
}

/// Maps a raw candidate onto the feasible set.
pub trait Projection: Sync {
    fn project(&self, p: &ParamVector) -> Result<ParamVector>;
}

/// No constraint.
pub struct Unconstrained;

impl Projection for Unconstrained {
    fn project(&self, p: &ParamVector) -> Result<ParamVector> {
        Ok(p.clone())
    }
}

impl Projection for StructureTemplate {
    fn project(&self, p: &ParamVector) -> Result<ParamVector> {
        Ok(pack_params(&self.normalize(&unpack_params(p)?)?.params))
    }
}

/// SER of the template instantiated with the candidate parameters.
pub struct SerObjective {
    template: StructureTemplate,
    eval: EvalConfig,
    seed: u64,
}

impl SerObjective {
    pub fn new(template: StructureTemplate, eval: EvalConfig, seed: u64) -> Result<Self> {
        if eval.frames == 0 {
            return Err(Error::InvalidConfig("evaluation needs at least one frame".into()));
        }
        eval.mpa.validate()?;
        Ok(Self { template, eval, seed })
    }

    /// Frame seed used for evaluations in `generation`.
    pub fn frame_seed(&self, generation: usize) -> u64 {
        let index = match self.eval.crn {
            CrnPolicy::Fixed => 0,
            CrnPolicy::PerGeneration => generation as u64,
        };
        stream_rng(self.seed, Domain::Evaluation, index).next_u64()
    }

    pub fn instantiate(&self, p: &ParamVector) -> Result<CodebookSet> {
        self.template.instantiate(&unpack_params(p)?)
    }
}

impl Objective for SerObjective {
    fn evaluate(&self, p: &ParamVector, generation: usize) -> Result<f64> {
        let set = self.instantiate(p)?;
        let e = &self.eval;
        Ok(estimate_ser(&set, e.ebn0_db, e.channel, e.frames, Detection::Mpa(e.mpa), self.frame_seed(generation))?.ser)
    }

    fn resamples(&self) -> bool {
        self.eval.crn == CrnPolicy::PerGeneration
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Population {
    pub rows: Vec<ParamVector>,
    pub fitness: Vec<f64>,
    pub generation: usize,
    pub best_index: usize,
}

impl Population {
    fn new(rows: Vec<ParamVector>, fitness: Vec<f64>, generation: usize) -> Self {
        let best_index = argmin(&fitness);
        Self { rows, fitness, generation, best_index }
    }

    pub fn best(&self) -> (&ParamVector, f64) {
        (&self.rows[self.best_index], self.fitness[self.best_index])
    }
}

/// First index of the smallest value.
fn argmin(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x < v[best] {
            best = i;
        }
    }
    best
}

fn evaluate_all(objective: &dyn Objective, rows: &[ParamVector], generation: usize) -> Result<Vec<f64>> {
    rows.par_iter().map(|p| objective.evaluate(p, generation)).collect()
}

/// Uniform `[-1, 1]` rows passed through `projection`; a row whose projection
/// fails is redrawn.
pub fn init_population(cfg: &DeConfig, projection: &dyn Projection, objective: &dyn Objective) -> Result<Population> {
    cfg.validate()?;
    let mut rng = stream_rng(cfg.seed, Domain::Population, 0);
    let mut rows = Vec::with_capacity(cfg.population);
    while rows.len() < cfg.population {
        let raw = ParamVector((0..cfg.dim).map(|_| rng.random_range(-1.0..=1.0)).collect());
        match projection.project(&raw) {
            Ok(p) => rows.push(p),
            Err(Error::DegenerateParams { .. }) => continue,
            Err(e) => return Err(e),
        }
    }
    let fitness = evaluate_all(objective, &rows, 0)?;
    Ok(Population::new(rows, fitness, 0))
}

/// Random choices behind one trial vector.
#[derive(Clone, Debug, PartialEq)]
pub struct TrialDraw {
    /// `r_0, r_1, r_2`: base vector and difference pair.
    pub donors: [usize; 3],
    pub j_rand: usize,
    /// Trial before projection.
    pub raw: ParamVector,
}

/// `u_j = p_{r0,j} + alpha (p_{r1,j} - p_{r2,j})` where `rand < C_r` or `j = j_rand`,
/// else the target's coordinate.
pub fn make_trial<R: Rng + ?Sized>(rows: &[ParamVector], i: usize, alpha: f64, crossover: f64, rng: &mut R) -> TrialDraw {
    let n = rows.len();
    assert!(n >= 4, "differential evolution needs at least four rows");
    let mut pool: Vec<usize> = (0..n).filter(|&r| r != i).collect();
    for slot in 0..3 {
        let pick = rng.random_range(slot..pool.len());
        pool.swap(slot, pick);
    }
    let donors = [pool[0], pool[1], pool[2]];
    debug_assert!(donors.iter().all(|&r| r != i) && donors[0] != donors[1] && donors[1] != donors[2] && donors[0] != donors[2]);
    let d = rows[i].len();
    let j_rand = rng.random_range(0..d);
    let (b, x, y, t) = (&rows[donors[0]].0, &rows[donors[1]].0, &rows[donors[2]].0, &rows[i].0);
    let raw = (0..d)
        .map(|j| {
            let r: f64 = rng.random();
            if r < crossover || j == j_rand {
                b[j] + alpha * (x[j] - y[j])
            } else {
                t[j]
            }
        })
        .collect();
    TrialDraw { donors, j_rand, raw: ParamVector(raw) }
}

/// One generation. On error the caller's population is untouched.
pub fn step_generation(pop: &Population, cfg: &DeConfig, projection: &dyn Projection, objective: &dyn Objective) -> Result<Population> {
    let generation = pop.generation + 1;
    let mut rng = stream_rng(cfg.seed, Domain::Trial, generation as u64);
    let mut trials = Vec::with_capacity(pop.rows.len());
    for i in 0..pop.rows.len() {
        let draw = make_trial(&pop.rows, i, cfg.alpha, cfg.crossover, &mut rng);
        trials.push(match projection.project(&draw.raw) {
            Ok(p) => Some(p),
            Err(Error::DegenerateParams { .. }) => None,
            Err(e) => return Err(e),
        });
    }
    let trial_fitness: Vec<Option<f64>> = trials
        .par_iter()
        .map(|t| t.as_ref().map(|p| objective.evaluate(p, generation)).transpose())
        .collect::<Result<_>>()?;
    let current = if objective.resamples() { evaluate_all(objective, &pop.rows, generation)? } else { pop.fitness.clone() };
    let mut rows = pop.rows.clone();
    let mut fitness = current;
    for (i, (t, f)) in trials.into_iter().zip(trial_fitness).enumerate() {
        if let (Some(t), Some(f)) = (t, f) {
            if f < fitness[i] {
                rows[i] = t;
                fitness[i] = f;
            }
        }
    }
    let next = Population::new(rows, fitness, generation);
    debug_assert!(objective.resamples() || next.best().1 <= pop.best().1);
    Ok(next)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    MaxIterations,
    Plateau,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DeOutcome {
    pub population: Population,
    /// Best value of the initial population, then after every generation.
    pub history: Vec<f64>,
    pub stop: StopReason,
}

impl DeOutcome {
    pub fn best(&self) -> (&ParamVector, f64) {
        self.population.best()
    }
}

/// True when the last `window` generations improved the best value by less
/// than `eps` relative to where it stood `window` generations earlier.
pub fn plateaued(history: &[f64], eps: f64, window: usize) -> bool {
    if eps <= 0.0 || history.len() <= window {
        return false;
    }
    let old = history[history.len() - 1 - window];
    let new = history[history.len() - 1];
    old == 0.0 || (old - new) / old < eps
}

pub fn optimize(cfg: &DeConfig, projection: &dyn Projection, objective: &dyn Objective) -> Result<DeOutcome> {
    optimize_with(cfg, projection, objective, |_| {})
}

/// [`optimize`] with a callback after the initial population and every generation.
pub fn optimize_with(
    cfg: &DeConfig,
    projection: &dyn Projection,
    objective: &dyn Objective,
    mut on_generation: impl FnMut(&Population),
) -> Result<DeOutcome> {
    let mut pop = init_population(cfg, projection, objective)?;
    on_generation(&pop);
    let mut history = vec![pop.best().1];
    let mut stop = StopReason::MaxIterations;
    while pop.generation < cfg.max_iter {
        pop = step_generation(&pop, cfg, projection, objective)?;
        history.push(pop.best().1);
        on_generation(&pop);
        if plateaued(&history, cfg.plateau_eps, cfg.plateau_window) {
            stop = StopReason::Plateau;
            break;
        }
    }
    Ok(DeOutcome { population: pop, history, stop })
}

/// Noted in every run artifact.
pub const SELECTION_NOTE: &str =
    "trial replaces its target only when strictly better (f(u) < f(p)); trials are built from the population as it stood at the start of the generation";

/// JSON record of an SER optimization run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunArtifact {
    pub template: String,
    pub de: DeConfig,
    pub eval: EvalConfig,
    pub selection: String,
    pub stop_reason: StopReason,
    pub generations: usize,
    /// Per-generation best SER, starting with the initial population.
    pub history: Vec<f64>,
    pub best_ser: f64,
    pub params: ParamVector,
    /// `[re, im]` pairs.
    pub a_opt: Vec<[f64; 2]>,
    pub codebook: serde_json::Value,
}

/// Searches the template's parameter space for the lowest SER.
pub fn optimize_template(
    template: &StructureTemplate,
    cfg: &DeConfig,
    eval: &EvalConfig,
    on_generation: impl FnMut(&Population),
) -> Result<RunArtifact> {
    if cfg.dim != 2 * template.num_params() {
        return Err(Error::InvalidConfig(format!(
            "template `{}` has {} complex parameters, so the dimension must be {}, not {}",
            template.name(),
            template.num_params(),
            2 * template.num_params(),
            cfg.dim
        )));
    }
    let objective = SerObjective::new(template.clone(), eval.clone(), cfg.seed)?;
    let out = optimize_with(cfg, template, &objective, on_generation)?;
    let (best, best_ser) = out.best();
    let a = unpack_params(best)?;
    let set = template.instantiate(&a)?;
    Ok(RunArtifact {
        template: template.name().to_string(),
        de: cfg.clone(),
        eval: eval.clone(),
        selection: SELECTION_NOTE.to_string(),
        stop_reason: out.stop,
        generations: out.population.generation,
        history: out.history.clone(),
        best_ser,
        params: best.clone(),
        a_opt: a.iter().map(|z| [z.re, z.im]).collect(),
        codebook: set.to_json_value(),
    })
}

//! Inputs shared by the benchmarks.

use gazedwell::engine::EngineConfig;
use gazedwell::sim::{pre_select_scanpath, synth_trials, SynthConfig};
use gazedwell::{ModelParams, PageLayout, Scanpath, TrialRecord};

pub struct Corpus {
    pub models: ModelParams,
    pub trials: Vec<TrialRecord>,
}

/// Synthetic corpus of `n` trials with the default layout generator.
pub fn corpus(n: usize, seed: u64) -> Corpus {
    let models = ModelParams::fixture();
    let cfg = SynthConfig { n_trials: n, seed, ..Default::default() };
    let trials = synth_trials(&cfg, &models).expect("synthetic corpus");
    Corpus { models, trials }
}

impl Corpus {
    /// The trial with the longest pre-select trace.
    pub fn longest(&self) -> &TrialRecord {
        self.trials.iter().max_by_key(|t| t.pre_select.len()).expect("non-empty corpus")
    }

    pub fn scanpath<'a>(&self, trial: &'a TrialRecord) -> (Scanpath, &'a PageLayout) {
        let sp = pre_select_scanpath(trial, &self.models, &EngineConfig::default()).expect("scanpath");
        (sp, &trial.layout)
    }
}

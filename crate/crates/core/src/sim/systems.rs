use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::baselines::{
    ActiveRanking, Elo, Glicko2, KSort, ModelIdx, RankCentrality, Rater, RaterError, Rucb, TrueSkill,
};
use crate::rating::{MicroBatchResult, RatingHyperParams};
use crate::scheduler::{ArenaState, ConvergenceRule, ScheduleDecision, ScheduleMode, SelectionTuple};

/// Systems the benchmark can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemKind {
    Elo,
    TrueSkill,
    TrueSkill2,
    Glicko2,
    RankCentrality,
    KSort,
    ActiveRanking,
    Rucb,
    Ours,
    /// Ours with the uncertainty penalty at full strength from the start.
    OursNoWarmup,
    /// Ours with every decisive batch weighted 1.
    OursUnitWeight,
}

impl SystemKind {
    /// The nine systems of the benchmark table, in table order.
    pub const BENCHMARK: [SystemKind; 9] = [
        SystemKind::Elo,
        SystemKind::TrueSkill,
        SystemKind::TrueSkill2,
        SystemKind::Glicko2,
        SystemKind::RankCentrality,
        SystemKind::KSort,
        SystemKind::ActiveRanking,
        SystemKind::Rucb,
        SystemKind::Ours,
    ];

    pub const ABLATIONS: [SystemKind; 3] = [SystemKind::Ours, SystemKind::OursNoWarmup, SystemKind::OursUnitWeight];

    pub fn name(self) -> &'static str {
        match self {
            SystemKind::Elo => "Elo",
            SystemKind::TrueSkill => "TrueSkill",
            SystemKind::TrueSkill2 => "TrueSkill2",
            SystemKind::Glicko2 => "Glicko-2",
            SystemKind::RankCentrality => "Rank Centrality",
            SystemKind::KSort => "K-Sort Arena",
            SystemKind::ActiveRanking => "Active Ranking",
            SystemKind::Rucb => "RUCB",
            SystemKind::Ours => "Ours",
            SystemKind::OursNoWarmup => "Ours w/o eta warmup",
            SystemKind::OursUnitWeight => "Ours w/o confidence weight",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        let all = [
            SystemKind::Elo,
            SystemKind::TrueSkill,
            SystemKind::TrueSkill2,
            SystemKind::Glicko2,
            SystemKind::RankCentrality,
            SystemKind::KSort,
            SystemKind::ActiveRanking,
            SystemKind::Rucb,
            SystemKind::Ours,
            SystemKind::OursNoWarmup,
            SystemKind::OursUnitWeight,
        ];
        let key = name.to_ascii_lowercase();
        all.into_iter().find(|s| {
            s.name().to_ascii_lowercase() == key
                || serde_json::to_value(s).ok().and_then(|v| v.as_str().map(str::to_string)) == Some(key.clone())
        })
    }

    /// Rating parameters this system runs with, derived from `hp`.
    pub fn hyper_params(self, hp: &RatingHyperParams) -> RatingHyperParams {
        match self {
            SystemKind::OursNoWarmup => RatingHyperParams {
                warmup_batches: 0,
                ..hp.clone()
            },
            SystemKind::OursUnitWeight => RatingHyperParams {
                weight_max: 1.0,
                ..hp.clone()
            },
            _ => hp.clone(),
        }
    }

    pub fn build(self, hp: &RatingHyperParams, seed: u64) -> Box<dyn Rater> {
        match self {
            SystemKind::Elo => Box::new(Elo::default()),
            SystemKind::TrueSkill => Box::new(TrueSkill::trueskill()),
            SystemKind::TrueSkill2 => Box::new(TrueSkill::trueskill2()),
            SystemKind::Glicko2 => Box::new(Glicko2::default()),
            SystemKind::RankCentrality => Box::new(RankCentrality::default()),
            SystemKind::KSort => Box::new(KSort::default()),
            SystemKind::ActiveRanking => Box::new(ActiveRanking::default()),
            SystemKind::Rucb => Box::new(Rucb::default()),
            SystemKind::Ours | SystemKind::OursNoWarmup | SystemKind::OursUnitWeight => {
                Box::new(ArenaRater::new(self.hyper_params(hp), seed, self.name()))
            }
        }
    }
}

/// The arena scheduler and rating model behind the [`Rater`] interface.
pub struct ArenaRater {
    pub hp: RatingHyperParams,
    pub state: ArenaState,
    name: &'static str,
    models: Vec<ModelIdx>,
    pending: Option<ScheduleDecision>,
}

impl ArenaRater {
    pub fn new(hp: RatingHyperParams, seed: u64, name: &'static str) -> Self {
        Self {
            hp,
            state: ArenaState::with_convergence(seed, ConvergenceRule::SigmaFloor),
            name,
            models: Vec::new(),
            pending: None,
        }
    }

    pub fn id(model: ModelIdx) -> String {
        format!("m{model:04}")
    }

    fn idx(id: &str) -> ModelIdx {
        id[1..].parse().expect("ids are generated by ArenaRater::id")
    }
}

impl Rater for ArenaRater {
    fn name(&self) -> &'static str {
        self.name
    }

    fn inject(&mut self, model: ModelIdx) -> Result<(), RaterError> {
        self.state
            .register(&Self::id(model), &self.hp)
            .map_err(|_| RaterError::DuplicateModel(model))?;
        self.models.push(model);
        Ok(())
    }

    fn models(&self) -> &[ModelIdx] {
        &self.models
    }

    fn observe(&mut self, a: ModelIdx, b: ModelIdx, batch: &MicroBatchResult) -> Result<(), RaterError> {
        if a == b {
            return Err(RaterError::SelfPair(a));
        }
        let (ida, idb) = (Self::id(a), Self::id(b));
        for (m, id) in [(a, &ida), (b, &idb)] {
            if !self.state.ratings.contains_key(id) {
                return Err(RaterError::UnknownModel(m));
            }
        }
        let decision = match self.pending.take() {
            Some(d) if d.pivot == ida && d.opponent == idb => d,
            _ => ScheduleDecision {
                pivot: ida,
                opponent: idb,
                mode: ScheduleMode::ActivePair,
                selection_tuple: SelectionTuple {
                    ucb_score: 0.0,
                    sigma_bias: 0.0,
                    jitter: 0.0,
                },
            },
        };
        self.state
            .commit(decision, Vec::new(), *batch, &self.hp)
            .expect("registered models with finite ratings");
        Ok(())
    }

    fn rank(&self) -> Vec<ModelIdx> {
        self.state
            .leaderboard(&self.hp)
            .into_iter()
            .map(|row| Self::idx(&row.model))
            .collect()
    }

    fn reset(&mut self) {
        self.state = ArenaState::with_convergence(self.state.rng_seed, self.state.convergence);
        self.models.clear();
        self.pending = None;
    }

    fn propose(&mut self, _rng: &mut dyn RngCore) -> Option<(ModelIdx, ModelIdx)> {
        let decision = self.state.decide(&self.hp).ok()?;
        let pair = (Self::idx(&decision.pivot), Self::idx(&decision.opponent));
        self.pending = Some(decision);
        Some(pair)
    }
}

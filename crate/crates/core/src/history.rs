//! Per-generation run records.

/// Replacement of the anchor by a strictly better individual.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwitchEvent {
    pub generation: usize,
    pub evolution_step: usize,
    pub old_fitness: f64,
    pub new_fitness: f64,
    pub new_anchor_id: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationRecord {
    pub round: usize,
    /// Global 1-based generation number (continues across anchoring rounds).
    pub generation: usize,
    pub best: f64,
    pub median: f64,
    pub anchor: f64,
    pub switched: bool,
    pub lr_low: f64,
    pub lr_high: f64,
    /// Anchor fitness after each evolution step of this generation.
    pub anchor_after_step: Vec<f64>,
    pub switches: Vec<SwitchEvent>,
    /// Evaluations in this generation that produced a non-finite loss.
    pub non_finite: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FineTuneRecord {
    pub round: usize,
    pub epoch: usize,
    pub best: f64,
    pub anchor: f64,
    /// Members that backed off (and halved their rate) in this epoch.
    pub backoffs: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    pub round: usize,
    pub initial_anchor: f64,
    pub final_best: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunHistory {
    pub initial_anchor: f64,
    pub generations: Vec<GenerationRecord>,
    pub fine_tune: Vec<FineTuneRecord>,
    pub rounds: Vec<RoundRecord>,
}

impl RunHistory {
    pub fn new(initial_anchor: f64) -> Self {
        Self {
            initial_anchor,
            ..Self::default()
        }
    }

    pub fn best_curve(&self) -> Vec<f64> {
        self.generations.iter().map(|g| g.best).collect()
    }

    /// Best fitness after the final phase of the last round.
    pub fn final_best(&self) -> Option<f64> {
        self.rounds
            .last()
            .map(|r| r.final_best)
            .or_else(|| self.fine_tune.last().map(|f| f.best))
            .or_else(|| self.generations.last().map(|g| g.best))
    }

    pub fn switch_count(&self) -> usize {
        self.generations.iter().map(|g| g.switches.len()).sum()
    }

    /// Whether the best-fitness curve (prefixed by the initial anchor) never increases.
    pub fn is_monotone(&self) -> bool {
        let mut prev = self.initial_anchor;
        for g in &self.generations {
            if g.best > prev {
                return false;
            }
            prev = g.best;
        }
        true
    }

    /// Whether the anchor fitness never increases across evolution steps.
    pub fn anchor_is_monotone(&self) -> bool {
        let mut prev = self.initial_anchor;
        for g in &self.generations {
            for &a in &g.anchor_after_step {
                if a > prev {
                    return false;
                }
                prev = a;
            }
        }
        true
    }

    /// Bit-level equality. `Debug` prints the shortest round-trip form of
    /// every float, so equal strings mean equal bits (including `-0.0`).
    pub fn bitwise_eq(&self, other: &RunHistory) -> bool {
        format!("{self:?}") == format!("{other:?}")
    }
}

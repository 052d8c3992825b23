//! Individuals, the population container and fitness ranking.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::optimizer::{OptimizerConfig, OptimizerState};
use crate::params::ParamVector;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct Individual<T> {
    pub id: u64,
    pub params: ParamVector<T>,
    /// Optimizer assigned for the current generation; `None` until the SGD phase.
    pub config: Option<OptimizerConfig>,
    pub opt_state: OptimizerState<T>,
    /// Cached validation loss; `None` means unevaluated.
    pub fitness: Option<T>,
    pub is_anchor: bool,
    /// Set on offspring whose parent set included the anchor.
    pub anchor_descended: bool,
}

impl<T: Scalar> Individual<T> {
    pub fn new(id: u64, params: ParamVector<T>) -> Self {
        let dim = params.dim();
        Self {
            id,
            params,
            config: None,
            opt_state: OptimizerState::zeros(dim),
            fitness: None,
            is_anchor: false,
            anchor_descended: false,
        }
    }

    pub fn with_fitness(mut self, fitness: T) -> Self {
        self.fitness = Some(fitness);
        self
    }

    pub fn evaluated_fitness(&self) -> Result<T> {
        self.fitness.ok_or(Error::Unevaluated(self.id))
    }

    /// Fitness used for ordering: unevaluated and NaN both count as `+inf`.
    pub fn fitness_key(&self) -> T {
        self.fitness.map_or(T::infinity(), Scalar::fitness_key)
    }
}

/// Ascending `(fitness, id)` with NaN treated as `+inf`.
pub fn compare_fitness<T: Scalar>(a: (u64, T), b: (u64, T)) -> Ordering {
    let (ka, kb) = (a.1.fitness_key(), b.1.fitness_key());
    ka.partial_cmp(&kb)
        .expect("fitness keys are never NaN")
        .then(a.0.cmp(&b.0))
}

/// Ids ordered best first; ties broken by ascending id.
pub fn rank<T: Scalar>(entries: &[(u64, T)]) -> Result<Vec<u64>> {
    if entries.is_empty() {
        return Err(Error::Empty("rank input"));
    }
    let mut sorted = entries.to_vec();
    sorted.sort_by(|&a, &b| compare_fitness(a, b));
    Ok(sorted.into_iter().map(|(id, _)| id).collect())
}

/// Positions into `members`, best first.
pub fn rank_members<T: Scalar>(members: &[Individual<T>]) -> Result<Vec<usize>> {
    for m in members {
        m.evaluated_fitness()?;
    }
    if members.is_empty() {
        return Err(Error::Empty("rank input"));
    }
    let mut order: Vec<usize> = (0..members.len()).collect();
    order.sort_by(|&a, &b| {
        compare_fitness(
            (members[a].id, members[a].fitness_key()),
            (members[b].id, members[b].fitness_key()),
        )
    });
    Ok(order)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Population<T> {
    pub members: Vec<Individual<T>>,
    /// Number of completed generations.
    pub generation: usize,
    /// Next unused individual id.
    pub next_id: u64,
}

impl<T: Scalar> Population<T> {
    pub fn anchor_index(&self) -> Option<usize> {
        self.members.iter().position(|m| m.is_anchor)
    }

    pub fn anchor(&self) -> &Individual<T> {
        &self.members[self.anchor_index().expect("population has an anchor")]
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Checks size, single anchor, unique ids and dimension agreement.
    pub fn validate(&self, mu: usize) -> Result<()> {
        if self.members.len() != mu {
            return Err(Error::Shape(format!(
                "population has {} members, expected {mu}",
                self.members.len()
            )));
        }
        let anchors = self.members.iter().filter(|m| m.is_anchor).count();
        if anchors != 1 {
            return Err(Error::Shape(format!(
                "population has {anchors} anchors, expected 1"
            )));
        }
        let mut ids: Vec<u64> = self.members.iter().map(|m| m.id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Shape("duplicate individual ids".into()));
        }
        let d = self.members[0].params.dim();
        if let Some(m) = self.members.iter().find(|m| m.params.dim() != d) {
            return Err(Error::Dimension {
                expected: d,
                actual: m.params.dim(),
            });
        }
        Ok(())
    }

    pub fn best(&self) -> Result<&Individual<T>> {
        let order = rank_members(&self.members)?;
        Ok(&self.members[order[0]])
    }

    pub fn best_fitness(&self) -> Result<T> {
        self.best()?.evaluated_fitness()
    }

    pub fn median_fitness(&self) -> Result<T> {
        let mut f: Vec<T> = self
            .members
            .iter()
            .map(|m| m.evaluated_fitness().map(Scalar::fitness_key))
            .collect::<Result<_>>()?;
        if f.is_empty() {
            return Err(Error::Empty("population"));
        }
        f.sort_by(|a, b| a.partial_cmp(b).expect("keys are never NaN"));
        let n = f.len();
        Ok(if n % 2 == 1 {
            f[n / 2]
        } else {
            (f[n / 2 - 1] + f[n / 2]) / T::of(2.0)
        })
    }
}

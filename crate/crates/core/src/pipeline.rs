//! Per-task training setups shared by the command line and the test harness.

use serde::{Deserialize, Serialize};

use crate::bdm::PartitionStrategy;
use crate::classifier::{
    evaluate, train_centroids, train_scalar, CentroidModel, CentroidSearch, DistanceMode, Evaluation, Measure,
    ScalarModel, Tables,
};
use crate::ctm::{builtin_block_table, builtin_table, CtmTable};
use crate::domain::{build_eca_cond_db_with, build_nk_cond_dbs_with, CondCtmTable};
use crate::error::{Error, Result};
use crate::generators::{all_k2_topologies, all_rule_lists, rule_list_key, BoolFn, LabelledDataset, NkNetwork};
use crate::optimizer::{BlockSchedule, GreedyOptions, DEFAULT_BUDGET, DEFAULT_CAP_BITS};
use crate::par::Exec;
use crate::tensor::BinaryTensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    EcaRules,
    EcaInit,
    NkRules,
    NkTopology,
    NkKClass,
}

impl Task {
    pub const ALL: [Task; 5] = [Task::EcaRules, Task::EcaInit, Task::NkRules, Task::NkTopology, Task::NkKClass];

    /// Dataset task names as written by the generators.
    pub fn name(self) -> &'static str {
        match self {
            Task::EcaRules => "eca_rules",
            Task::EcaInit => "eca_init",
            Task::NkRules => "nk_rules",
            Task::NkTopology => "nk_topology",
            Task::NkKClass => "nk_k_class",
        }
    }

    pub fn from_name(s: &str) -> Result<Self> {
        let norm = s.replace('-', "_");
        Task::ALL
            .into_iter()
            .find(|t| t.name() == norm)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown task `{s}`")))
    }

    /// The conditional database a task's distance needs, if any.
    pub fn cond_db(self) -> Option<CondDb> {
        match self {
            Task::EcaInit => Some(CondDb::Eca),
            Task::NkRules => Some(CondDb::NkRules),
            Task::NkTopology => Some(CondDb::NkTopology),
            Task::EcaRules | Task::NkKClass => None,
        }
    }

    /// String or block table used for BDM in this task.
    pub fn ctm_table(self) -> &'static CtmTable {
        match self {
            Task::EcaRules | Task::NkTopology => builtin_block_table(),
            _ => builtin_table(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CondDb {
    Eca,
    NkRules,
    NkTopology,
}

impl CondDb {
    pub fn build(self, exec: Exec) -> Result<CondCtmTable> {
        Ok(match self {
            CondDb::Eca => build_eca_cond_db_with(exec)?,
            CondDb::NkRules => build_nk_cond_dbs_with(exec)?.rules,
            CondDb::NkTopology => build_nk_cond_dbs_with(exec)?.topology,
        })
    }
}

/// Tables resolved for one task.
pub struct TaskTables {
    pub ctm: &'static CtmTable,
    pub cond: Option<CondCtmTable>,
}

impl TaskTables {
    /// Builds the task's conditional database unless one is supplied.
    pub fn resolve(task: Task, cond: Option<CondCtmTable>, exec: Exec) -> Result<Self> {
        let cond = match (task.cond_db(), cond) {
            (None, _) => None,
            (Some(_), Some(db)) => Some(db),
            (Some(kind), None) => Some(kind.build(exec)?),
        };
        Ok(TaskTables { ctm: task.ctm_table(), cond })
    }

    pub fn tables(&self) -> Tables<'_> {
        Tables { ctm: Some(self.ctm), cond: self.cond.as_ref() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Candidates per streamed region.
    pub budget: usize,
    pub cap_bits: u32,
    pub permutation_invariant: bool,
    pub observed_universe: bool,
    /// ECA-rule centroids: quadrants, or tiles of this side length.
    pub tile: Option<usize>,
    /// Scalar measure and block length of the k-class task.
    pub measure: Measure,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            budget: DEFAULT_BUDGET,
            cap_bits: DEFAULT_CAP_BITS,
            permutation_invariant: true,
            observed_universe: true,
            tile: None,
            measure: Measure::Bdm { block: 8 },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum Model {
    Centroid(CentroidModel),
    Scalar(ScalarModel),
}

impl Model {
    pub fn classes(&self) -> &[String] {
        match self {
            Model::Centroid(m) => &m.classes,
            Model::Scalar(m) => &m.classes,
        }
    }

    /// A class-index predictor with per-model work done once.
    pub fn predictor<'a>(&'a self, tables: Tables<'a>) -> Result<Box<dyn Fn(&BinaryTensor) -> Result<usize> + Sync + Send + 'a>> {
        Ok(match self {
            Model::Centroid(m) => {
                let p = m.predictor(tables)?;
                Box::new(move |x: &BinaryTensor| p.predict_index(x))
            }
            Model::Scalar(m) => Box::new(move |x: &BinaryTensor| m.predict_index(tables.ctm, x)),
        })
    }

    pub fn evaluate(&self, tables: Tables<'_>, ds: &LabelledDataset, exec: Exec) -> Result<Evaluation> {
        let p = self.predictor(tables)?;
        evaluate(self.classes(), ds, p, exec)
    }
}

fn nk_topology_keys() -> Result<Vec<BinaryTensor>> {
    all_k2_topologies(4)
        .into_iter()
        .map(|t| Ok(NkNetwork::with_rule_list(t, &[BoolFn::And; 4])?.adjacency()))
        .collect()
}

pub fn train(task: Task, ds: &LabelledDataset, tables: &TaskTables, cfg: &TrainConfig, exec: Exec) -> Result<Model> {
    let options = GreedyOptions {
        cap_bits: cfg.cap_bits,
        budget: cfg.budget,
        permutation_invariant: cfg.permutation_invariant,
        observed_universe: cfg.observed_universe,
        exec,
        ..GreedyOptions::default()
    };
    let t = tables.tables();
    let model = match task {
        Task::EcaRules => {
            let shape = (16, 16);
            let schedule = match cfg.tile {
                None => BlockSchedule::quadrants(shape)?,
                Some(side) => BlockSchedule::tiles(shape, (side, side))?,
            };
            let search = CentroidSearch::Greedy {
                shape,
                schedule,
                table: tables.ctm,
                strategy: PartitionStrategy::blocks(4, 4),
                options,
            };
            train_centroids(ds, DistanceMode::CondBdm { block_rows: 4, block_cols: 4 }, t, &search, exec)?
        }
        Task::EcaInit => {
            let search = CentroidSearch::Greedy {
                shape: (1, 12),
                schedule: BlockSchedule::tiles((1, 12), (1, 6))?,
                table: tables.ctm,
                strategy: PartitionStrategy::vector(6),
                options,
            };
            let mode = DistanceMode::CondCtmAligned { outcome: (4, 6), condition: (1, 6) };
            train_centroids(ds, mode, t, &search, exec)?
        }
        Task::NkRules => {
            let candidates = all_rule_lists(4).iter().map(|r| rule_list_key(r)).collect();
            let search = CentroidSearch::Candidates { candidates, table: tables.ctm, strategy: PartitionStrategy::vector(8) };
            train_centroids(ds, DistanceMode::CondCtm, t, &search, exec)?
        }
        Task::NkTopology => {
            let search = CentroidSearch::Candidates {
                candidates: nk_topology_keys()?,
                table: tables.ctm,
                strategy: PartitionStrategy::blocks(4, 4),
            };
            train_centroids(ds, DistanceMode::CondCtm, t, &search, exec)?
        }
        Task::NkKClass => return Ok(Model::Scalar(train_scalar(ds, cfg.measure, Some(tables.ctm), exec)?)),
    };
    Ok(Model::Centroid(model))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn task_names_round_trip() {
        for t in Task::ALL {
            assert_eq!(Task::from_name(t.name()).unwrap(), t);
        }
        assert_eq!(Task::from_name("nk-k-class").unwrap(), Task::NkKClass);
        assert!(Task::from_name("mnist").is_err());
    }

    #[test]
    fn topology_keys_are_distinct() {
        let keys = nk_topology_keys().unwrap();
        assert_eq!(keys.len(), 1296);
        let mut s: Vec<String> = keys.iter().map(|k| k.to_string()).collect();
        s.sort();
        s.dedup();
        assert_eq!(s.len(), 1296);
    }

    #[test]
    fn train_config_json_defaults() {
        let c: TrainConfig = serde_json::from_str(r#"{"budget": 10}"#).unwrap();
        assert_eq!(c.budget, 10);
        assert!(c.observed_universe);
        assert!(serde_json::from_str::<TrainConfig>(r#"{"bogus": 1}"#).is_err());
    }
}

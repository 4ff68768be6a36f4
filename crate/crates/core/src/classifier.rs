//! Nearest-centroid classification under algorithmic distances, scalar
//! BDM/entropy classifiers, a nearest-neighbour baseline and evaluation.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bdm::{block_entropy, cond_bdm_aligned, coarse_of, partition, partition_blocks, BlockMultiset, PartitionStrategy};
use crate::ctm::CtmTable;
use crate::domain::{cond_ctm, CondCtmTable};
use crate::error::{Error, Result};
use crate::generators::LabelledDataset;
use crate::io::atomic_write;
use crate::optimizer::{algorithmic_search, greedy_block_optimize, order_by_bdm, BlockSchedule, GreedyOptions, Stop};
use crate::par::Exec;
use crate::tensor::{BinaryTensor, Block};

/// `d(x | centroid)` used by a centroid model.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DistanceMode {
    /// Coarse conditional BDM with a string or block table.
    CondBdm { block_rows: usize, block_cols: usize },
    /// Conditional table lookups between position-aligned tiles: sample tiles
    /// of the outcome shape against centroid tiles of the condition shape.
    CondCtmAligned {
        outcome: (usize, usize),
        condition: (usize, usize),
    },
    /// One conditional table lookup of the whole sample given the centroid.
    CondCtm,
}

/// Tables a distance mode may need.
#[derive(Clone, Copy, Debug, Default)]
pub struct Tables<'a> {
    pub ctm: Option<&'a CtmTable>,
    pub cond: Option<&'a CondCtmTable>,
}

impl<'a> Tables<'a> {
    pub fn ctm(table: &'a CtmTable) -> Self {
        Tables { ctm: Some(table), cond: None }
    }

    pub fn cond(db: &'a CondCtmTable) -> Self {
        Tables { ctm: None, cond: Some(db) }
    }

    fn need_ctm(&self) -> Result<&'a CtmTable> {
        self.ctm.ok_or_else(|| Error::InvalidArgument("distance needs a CTM table".into()))
    }

    fn need_cond(&self) -> Result<&'a CondCtmTable> {
        self.cond.ok_or_else(|| Error::InvalidArgument("distance needs a conditional table".into()))
    }
}

impl DistanceMode {
    pub fn distance(&self, tables: Tables<'_>, x: &BinaryTensor, centroid: &BinaryTensor) -> Result<f64> {
        match self {
            DistanceMode::CondBdm { block_rows, block_cols } => crate::bdm::cond_bdm_coarse(
                x,
                centroid,
                tables.need_ctm()?,
                &PartitionStrategy::blocks(*block_rows, *block_cols),
            ),
            DistanceMode::CondCtmAligned { outcome, condition } => cond_bdm_aligned(
                x,
                centroid,
                tables.need_cond()?,
                &PartitionStrategy::blocks(outcome.0, outcome.1),
                &PartitionStrategy::blocks(condition.0, condition.1),
                None,
            ),
            DistanceMode::CondCtm => cond_ctm(tables.need_cond()?, x, centroid),
        }
    }

    /// A distance from `x` to any centroid with the per-sample work done once.
    fn prepared<'t>(&self, tables: Tables<'t>, x: &BinaryTensor) -> Result<Prepared<'t>> {
        Ok(match self {
            DistanceMode::CondBdm { block_rows, block_cols } => {
                let s = PartitionStrategy::blocks(*block_rows, *block_cols);
                let table = tables.need_ctm()?;
                if !table.domain().accepts(s.block_shape()) {
                    return Err(Error::ShapeMismatch(format!(
                        "{block_rows}x{block_cols} blocks not scored by {}",
                        table.domain()
                    )));
                }
                Prepared::Coarse { x: partition(x, &s)?, s, table }
            }
            DistanceMode::CondCtmAligned { outcome, condition } => {
                let so = PartitionStrategy::blocks(outcome.0, outcome.1);
                let tiles = partition_blocks(x, &so);
                if tiles.is_empty() {
                    return Err(Error::ShapeMismatch("sample smaller than one tile".into()));
                }
                Prepared::Aligned {
                    tiles,
                    sc: PartitionStrategy::blocks(condition.0, condition.1),
                    db: tables.need_cond()?,
                }
            }
            DistanceMode::CondCtm => Prepared::Whole { x: Block::from_tensor(x)?, db: tables.need_cond()? },
        })
    }
}

enum Prepared<'t> {
    Coarse { x: BlockMultiset, s: PartitionStrategy, table: &'t CtmTable },
    Aligned { tiles: Vec<Block>, sc: PartitionStrategy, db: &'t CondCtmTable },
    Whole { x: Block, db: &'t CondCtmTable },
}

impl Prepared<'_> {
    fn to(&self, centroid: &PreparedCentroid) -> f64 {
        match (self, centroid) {
            (Prepared::Coarse { x, table, .. }, PreparedCentroid::Multiset(c)) => coarse_of(x, c, table),
            (Prepared::Aligned { tiles, db, .. }, PreparedCentroid::Tiles(c)) => {
                if tiles.len() != c.len() {
                    return f64::INFINITY;
                }
                tiles.iter().zip(c).map(|(o, k)| db.value(o, k)).sum()
            }
            (Prepared::Whole { x, db }, PreparedCentroid::Whole(c)) => db.value(x, c),
            _ => f64::INFINITY,
        }
    }

    fn centroid(&self, c: &BinaryTensor) -> Result<PreparedCentroid> {
        Ok(match self {
            Prepared::Coarse { s, .. } => PreparedCentroid::Multiset(partition(c, s)?),
            Prepared::Aligned { sc, .. } => PreparedCentroid::Tiles(partition_blocks(c, sc)),
            Prepared::Whole { .. } => PreparedCentroid::Whole(Block::from_tensor(c)?),
        })
    }
}

enum PreparedCentroid {
    Multiset(BlockMultiset),
    Tiles(Vec<Block>),
    Whole(Block),
}

/// Path and content hash of a table a model was trained with.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableRef {
    pub path: String,
    pub sha256: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub schedule: Option<BlockSchedule>,
    pub budget: Option<usize>,
    pub evaluations: usize,
    pub costs: Vec<f64>,
    pub table: Option<TableRef>,
    pub cond_table: Option<TableRef>,
    #[serde(default)]
    pub config_hash: String,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CentroidModel {
    pub mode: DistanceMode,
    pub classes: Vec<String>,
    pub centroids: Vec<BinaryTensor>,
    pub meta: TrainingMeta,
}

impl CentroidModel {
    pub fn new(mode: DistanceMode, classes: Vec<String>, centroids: Vec<BinaryTensor>) -> Result<Self> {
        if classes.is_empty() || classes.len() != centroids.len() {
            return Err(Error::InvalidArgument(format!(
                "{} classes for {} centroids",
                classes.len(),
                centroids.len()
            )));
        }
        let shape = centroids[0].shape();
        if centroids.iter().any(|c| c.shape() != shape) {
            return Err(Error::ShapeMismatch("centroids must share one shape".into()));
        }
        Ok(CentroidModel { mode, classes, centroids, meta: TrainingMeta::default() })
    }

    pub fn centroid(&self, class: &str) -> Option<&BinaryTensor> {
        self.classes.iter().position(|c| c == class).map(|i| &self.centroids[i])
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn persist(&self, path: impl AsRef<Path>) -> Result<()> {
        atomic_write(path.as_ref(), self.to_json()?.as_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let m: CentroidModel = serde_json::from_slice(&std::fs::read(path)?)?;
        CentroidModel::new(m.mode.clone(), m.classes.clone(), m.centroids.clone())?;
        Ok(m)
    }

    /// Distances from `x` to every centroid, in class order.
    pub fn distances(&self, tables: Tables<'_>, x: &BinaryTensor) -> Result<Vec<f64>> {
        let p = self.mode.prepared(tables, x)?;
        self.centroids
            .iter()
            .map(|c| Ok(p.to(&p.centroid(c)?)))
            .collect()
    }

    /// Index of the nearest class; ties go to the lowest index.
    pub fn predict_index(&self, tables: Tables<'_>, x: &BinaryTensor) -> Result<usize> {
        Ok(argmin(&self.distances(tables, x)?))
    }

    pub fn predict(&self, tables: Tables<'_>, x: &BinaryTensor) -> Result<&str> {
        Ok(&self.classes[self.predict_index(tables, x)?])
    }

    /// A predictor that caches centroid preparation across samples.
    pub fn predictor<'m, 't>(&'m self, tables: Tables<'t>) -> Result<Predictor<'m, 't>> {
        Predictor::new(self, tables)
    }
}

/// Batch prediction with centroid work hoisted out of the per-sample loop.
pub struct Predictor<'m, 't> {
    model: &'m CentroidModel,
    tables: Tables<'t>,
    centroids: Vec<PreparedCentroid>,
}

impl<'m, 't> Predictor<'m, 't> {
    fn new(model: &'m CentroidModel, tables: Tables<'t>) -> Result<Self> {
        let probe = model.mode.prepared(tables, &model.centroids[0]);
        let centroids = match (&model.mode, probe) {
            (DistanceMode::CondCtmAligned { condition, .. }, _) => model
                .centroids
                .iter()
                .map(|c| PreparedCentroid::Tiles(partition_blocks(c, &PartitionStrategy::blocks(condition.0, condition.1))))
                .collect(),
            (_, Ok(p)) => model.centroids.iter().map(|c| p.centroid(c)).collect::<Result<_>>()?,
            (_, Err(e)) => return Err(e),
        };
        Ok(Predictor { model, tables, centroids })
    }

    pub fn distances(&self, x: &BinaryTensor) -> Result<Vec<f64>> {
        let p = self.model.mode.prepared(self.tables, x)?;
        Ok(self.centroids.iter().map(|c| p.to(c)).collect())
    }

    pub fn predict_index(&self, x: &BinaryTensor) -> Result<usize> {
        Ok(argmin(&self.distances(x)?))
    }
}

fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v < values[best] {
            best = i;
        }
    }
    best
}

/// Samples of each class, classes in first-appearance order.
fn by_class(ds: &LabelledDataset) -> Result<(Vec<String>, Vec<Vec<&BinaryTensor>>)> {
    let classes = ds.labels();
    if classes.is_empty() {
        return Err(Error::Empty("dataset has no samples".into()));
    }
    let groups = classes
        .iter()
        .map(|c| ds.samples.iter().filter(|s| &s.label == c).map(|s| &s.tensor).collect())
        .collect();
    Ok((classes, groups))
}

/// How centroid candidates are generated during training.
#[derive(Clone, Debug)]
pub enum CentroidSearch<'a> {
    /// Greedy block optimization over a `shape` tensor, with candidates
    /// ranked by `table` under `strategy`.
    Greedy {
        shape: (usize, usize),
        schedule: BlockSchedule,
        table: &'a CtmTable,
        strategy: PartitionStrategy,
        options: GreedyOptions,
    },
    /// Exhaustive search of an explicit candidate list, ranked by BDM.
    Candidates {
        candidates: Vec<BinaryTensor>,
        table: &'a CtmTable,
        strategy: PartitionStrategy,
    },
}

/// Per class, the centroid minimising `Σ d(x_i | c)` over the class samples.
pub fn train_centroids(
    ds: &LabelledDataset,
    mode: DistanceMode,
    tables: Tables<'_>,
    search: &CentroidSearch<'_>,
    exec: Exec,
) -> Result<CentroidModel> {
    let (classes, groups) = by_class(ds)?;
    let mut centroids = Vec::with_capacity(classes.len());
    let mut costs = Vec::new();
    let mut evaluations = 0;
    let ordered = match search {
        CentroidSearch::Candidates { candidates, table, strategy } => {
            Some(order_by_bdm(candidates, |c| c.clone(), table, strategy)?)
        }
        CentroidSearch::Greedy { .. } => None,
    };
    for group in &groups {
        let prepared: Vec<Prepared> = group.iter().map(|x| mode.prepared(tables, x)).collect::<Result<_>>()?;
        let probe = &prepared[0];
        let cost = |c: &BinaryTensor| -> f64 {
            let Ok(pc) = probe.centroid(c) else {
                return f64::INFINITY;
            };
            prepared.iter().map(|p| p.to(&pc)).sum()
        };
        match search {
            CentroidSearch::Greedy { shape, schedule, table, strategy, options } => {
                let mut opts = GreedyOptions { exec, ..options.clone() };
                if opts.universe.is_none() && matches!(mode, DistanceMode::CondBdm { .. }) && options.observed_universe {
                    opts.universe = Some(observed_universe(group, strategy, table)?);
                }
                let out = greedy_block_optimize(*shape, schedule, cost, table, strategy, &opts)?;
                evaluations += out.evaluations.iter().sum::<usize>();
                costs.push(out.cost);
                centroids.push(out.tensor);
            }
            CentroidSearch::Candidates { .. } => {
                let cands = ordered.as_ref().expect("ordered above");
                let r = algorithmic_search(cands, |c| cost(c), Stop::iters(cands.len()), exec)?;
                evaluations += r.iterations;
                costs.push(r.best_cost);
                centroids.push(r.best);
            }
        }
    }
    let mut model = CentroidModel::new(mode, classes, centroids)?;
    model.meta.evaluations = evaluations;
    model.meta.costs = costs;
    if let CentroidSearch::Greedy { schedule, options, .. } = search {
        model.meta.schedule = Some(schedule.clone());
        model.meta.budget = Some(options.budget);
    }
    Ok(model)
}

/// Blocks occurring in `samples`, plus the simplest block that does not,
/// sorted by table value.
///
/// Under coarse conditional BDM a centroid block absent from every sample
/// leaves each sample's distance unchanged, whatever its multiplicity, so
/// all absent blocks are interchangeable and one representative suffices.
pub fn observed_universe(samples: &[&BinaryTensor], s: &PartitionStrategy, table: &CtmTable) -> Result<Vec<Block>> {
    let mut seen = rustc_hash::FxHashSet::default();
    for x in samples {
        for (b, _) in partition(x, s)?.iter() {
            seen.insert(*b);
        }
    }
    let cells = s.block_rows * s.block_cols;
    let filler = (0u128..(1u128 << cells.min(64)))
        .map(|bits| Block::new(s.block_rows, s.block_cols, bits))
        .filter_map(Result::ok)
        .filter(|b| !seen.contains(b))
        .min_by(|a, b| table.value(a).total_cmp(&table.value(b)).then(a.cmp(b)));
    let mut blocks: Vec<Block> = seen.into_iter().chain(filler).collect();
    crate::optimizer::sort_universe(&mut blocks, table);
    Ok(blocks)
}

/// Per-sample scalar used by [`ScalarModel`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Measure {
    Bdm { block: usize },
    Entropy { block: usize },
}

impl Measure {
    pub fn eval(&self, table: Option<&CtmTable>, x: &BinaryTensor) -> Result<f64> {
        match self {
            Measure::Bdm { block } => {
                let t = table.ok_or_else(|| Error::InvalidArgument("BDM measure needs a table".into()))?;
                crate::bdm::bdm(x, t, &PartitionStrategy::vector(*block))
            }
            Measure::Entropy { block } => block_entropy(x, &PartitionStrategy::vector(*block)),
        }
    }
}

/// Class means of a scalar measure; prediction picks the nearest mean.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalarModel {
    pub measure: Measure,
    pub classes: Vec<String>,
    pub means: Vec<f64>,
}

impl ScalarModel {
    pub fn predict_value(&self, v: f64) -> usize {
        argmin(&self.means.iter().map(|m| (v - m).abs()).collect::<Vec<_>>())
    }

    pub fn predict_index(&self, table: Option<&CtmTable>, x: &BinaryTensor) -> Result<usize> {
        Ok(self.predict_value(self.measure.eval(table, x)?))
    }
}

pub fn train_scalar(ds: &LabelledDataset, measure: Measure, table: Option<&CtmTable>, exec: Exec) -> Result<ScalarModel> {
    let (classes, groups) = by_class(ds)?;
    let mut means = Vec::new();
    for g in groups {
        let vals = exec.map(&g, |x| measure.eval(table, x));
        let vals: Vec<f64> = vals.into_iter().collect::<Result<_>>()?;
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        if !mean.is_finite() {
            return Err(Error::InvalidArgument("non-finite class mean".into()));
        }
        means.push(mean);
    }
    Ok(ScalarModel { measure, classes, means })
}

/// Nearest training sample by a scalar measure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NearestNeighbour {
    pub measure: Measure,
    pub classes: Vec<String>,
    /// Training values sorted ascending, with class indices.
    pub points: Vec<(f64, usize)>,
}

impl NearestNeighbour {
    pub fn train(ds: &LabelledDataset, measure: Measure, table: Option<&CtmTable>, exec: Exec) -> Result<Self> {
        let classes = ds.labels();
        if classes.is_empty() {
            return Err(Error::Empty("dataset has no samples".into()));
        }
        let vals = exec.map(&ds.samples, |s| measure.eval(table, &s.tensor));
        let mut points = Vec::with_capacity(vals.len());
        for (v, s) in vals.into_iter().zip(&ds.samples) {
            let class = classes.iter().position(|c| c == &s.label).expect("label listed");
            points.push((v?, class));
        }
        points.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        Ok(NearestNeighbour { measure, classes, points })
    }

    pub fn predict_value(&self, v: f64) -> usize {
        let i = self.points.partition_point(|p| p.0 < v);
        let near = [i.checked_sub(1), Some(i)]
            .into_iter()
            .flatten()
            .filter_map(|j| self.points.get(j))
            .map(|p| (p.0 - v).abs())
            .fold(f64::INFINITY, f64::min);
        // Points at the nearest distance form contiguous runs; take the
        // lowest class among them.
        self.points
            .iter()
            .filter(|p| (p.0 - v).abs() == near)
            .map(|p| p.1)
            .min()
            .unwrap_or(0)
    }

    pub fn predict_index(&self, table: Option<&CtmTable>, x: &BinaryTensor) -> Result<usize> {
        Ok(self.predict_value(self.measure.eval(table, x)?))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub accuracy: f64,
    pub classes: Vec<String>,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
    pub total: usize,
}

/// Scores `predict` (returning a class index into `classes`) on `ds`.
pub fn evaluate<F>(classes: &[String], ds: &LabelledDataset, predict: F, exec: Exec) -> Result<Evaluation>
where
    F: Fn(&BinaryTensor) -> Result<usize> + Sync + Send,
{
    let n = classes.len();
    let mut confusion = vec![vec![0usize; n]; n];
    let preds = exec.map(&ds.samples, |s| predict(&s.tensor));
    let mut correct = 0;
    for (s, p) in ds.samples.iter().zip(preds) {
        let p = p?;
        let t = classes
            .iter()
            .position(|c| c == &s.label)
            .ok_or_else(|| Error::InvalidArgument(format!("label `{}` unknown to the model", s.label)))?;
        if p >= n {
            return Err(Error::InvalidArgument(format!("prediction {p} outside {n} classes")));
        }
        confusion[t][p] += 1;
        correct += (t == p) as usize;
    }
    let total = ds.len();
    let accuracy = if total == 0 { 0.0 } else { correct as f64 / total as f64 };
    Ok(Evaluation { accuracy, classes: classes.to_vec(), confusion, total })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ctm::builtin_table;
    use crate::generators::{Sample, Split};

    fn t(s: &str) -> BinaryTensor {
        s.parse().unwrap()
    }

    #[test]
    fn observed_universe_keeps_seen_blocks_and_one_filler() {
        let table = builtin_table();
        let (a, b) = (t("00000101"), t("00000011"));
        let u = observed_universe(&[&a, &b], &PartitionStrategy::vector(2), table).unwrap();
        let names: Vec<String> = u.iter().map(|b| b.to_string()).collect();
        // 00, 01 and 11 occur; 10 is the only absent 2-bit block
        assert_eq!(names.len(), 4);
        for want in ["00", "01", "10", "11"] {
            assert!(names.contains(&want.to_string()));
        }
        for w in u.windows(2) {
            assert!(table.value(&w[0]) <= table.value(&w[1]));
        }
        let all = t("00011011");
        let u = observed_universe(&[&all], &PartitionStrategy::vector(2), table).unwrap();
        assert_eq!(u.len(), 4);
    }

    fn ds(items: &[(&str, &str)]) -> LabelledDataset {
        LabelledDataset::new(
            Split::Training,
            0,
            items.iter().map(|(l, x)| Sample { tensor: t(x), label: l.to_string() }).collect(),
        )
        .unwrap()
    }

    #[test]
    fn centroid_self_distance_and_ties() {
        let table = builtin_table();
        let mode = DistanceMode::CondBdm { block_rows: 1, block_cols: 4 };
        let model = CentroidModel::new(
            mode,
            vec!["a".into(), "b".into(), "c".into()],
            vec![t("00001111"), t("10101100"), t("00001111")],
        )
        .unwrap();
        let tables = Tables::ctm(table);
        assert_eq!(model.predict(tables, &t("10101100")).unwrap(), "b");
        assert_eq!(model.predict(tables, &t("00001111")).unwrap(), "a");
        let p = model.predictor(tables).unwrap();
        assert_eq!(p.distances(&t("11100111")).unwrap(), model.distances(tables, &t("11100111")).unwrap());
    }

    #[test]
    fn single_sample_class_reaches_zero_cost() {
        let table = builtin_table();
        let data = ds(&[("x", "1011"), ("y", "0110")]);
        let search = CentroidSearch::Greedy {
            shape: (1, 4),
            schedule: BlockSchedule::tiles((1, 4), (1, 4)).unwrap(),
            table,
            strategy: PartitionStrategy::vector(2),
            options: GreedyOptions::default(),
        };
        let mode = DistanceMode::CondBdm { block_rows: 1, block_cols: 2 };
        let model = train_centroids(&data, mode.clone(), Tables::ctm(table), &search, Exec::Sequential).unwrap();
        assert_eq!(model.meta.costs, vec![0.0, 0.0]);
        let again = train_centroids(&data, mode, Tables::ctm(table), &search, Exec::default()).unwrap();
        assert_eq!(model, again);
    }

    #[test]
    fn scalar_and_neighbour_models() {
        let data = ds(&[("lo", "00000000"), ("lo", "00000001"), ("hi", "01101001"), ("hi", "10110100")]);
        let m = train_scalar(&data, Measure::Entropy { block: 1 }, None, Exec::Sequential).unwrap();
        assert_eq!(m.classes, vec!["lo".to_string(), "hi".to_string()]);
        assert!(m.means[0] < m.means[1]);
        assert_eq!(m.predict_value(m.means[1]), 1);
        assert_eq!(m.predict_value(m.means[0] + 0.1), 0);
        let nn = NearestNeighbour::train(&data, Measure::Entropy { block: 1 }, None, Exec::Sequential).unwrap();
        assert_eq!(nn.predict_index(None, &t("11110000")).unwrap(), 1);
        assert_eq!(nn.predict_index(None, &t("11111111")).unwrap(), 0);
        assert!(train_scalar(&data, Measure::Bdm { block: 4 }, None, Exec::Sequential).is_err());
    }

    #[test]
    fn evaluation_counts() {
        let data = ds(&[("a", "0"), ("b", "1"), ("c", "0"), ("a", "1"), ("b", "0"), ("c", "1")]);
        let classes = data.labels();
        let truth = |x: &BinaryTensor| -> Result<usize> { Ok(x.count_ones()) };
        let e = evaluate(&classes, &data, truth, Exec::Sequential).unwrap();
        assert_eq!(e.total, 6);
        let constant = evaluate(&classes, &data, |_| Ok(0), Exec::Sequential).unwrap();
        assert!((constant.accuracy - 1.0 / 3.0).abs() < 1e-12);
        for (row, c) in constant.confusion.iter().zip(&classes) {
            assert_eq!(row.iter().sum::<usize>(), data.samples.iter().filter(|s| &s.label == c).count());
        }
        let perfect = evaluate(&classes, &data, |x| Ok(if x.count_ones() == 0 { 0 } else { 1 }), Exec::Sequential).unwrap();
        assert!(perfect.accuracy < 1.0);
    }

    #[test]
    fn model_json_round_trip() {
        let model = CentroidModel::new(
            DistanceMode::CondCtmAligned { outcome: (4, 6), condition: (1, 6) },
            vec!["704".into()],
            vec![t("001011000000")],
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.json");
        model.persist(&p).unwrap();
        assert_eq!(CentroidModel::load(&p).unwrap(), model);
    }
}

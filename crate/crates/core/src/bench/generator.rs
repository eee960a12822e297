use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{CarpError, Result};
use crate::instance::{Edge, Instance};

/// Shape of a synthetic dataset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetSpec {
    pub name: String,
    pub train_count: usize,
    pub test_count: usize,
    pub nodes: (usize, usize),
    pub required: usize,
    pub demand: (u32, u32),
    pub capacity: u32,
    pub seed: u64,
}

impl DatasetSpec {
    /// Desk-scale preset for `TaskN` (`N` in 20, 30, 40, 50, 60, 80, 100):
    /// 500 training and 200 test instances.
    pub fn mini(required: usize) -> Option<DatasetSpec> {
        let nodes = match required {
            20 => (25, 30),
            30 => (30, 35),
            40 => (45, 50),
            50 => (55, 60),
            60 => (65, 70),
            80 => (85, 90),
            100 => (105, 110),
            _ => return None,
        };
        Some(DatasetSpec {
            name: format!("Task{required}-mini"),
            train_count: 500,
            test_count: 200,
            nodes,
            required,
            demand: (5, 10),
            capacity: 100,
            seed: required as u64,
        })
    }

    /// Looks a preset up by name, e.g. `Task20-mini`.
    pub fn preset(name: &str) -> Option<DatasetSpec> {
        let n = name.strip_prefix("Task")?.strip_suffix("-mini")?.parse().ok()?;
        DatasetSpec::mini(n)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(CarpError::InvalidInstance(format!("dataset spec {}: {m}", self.name)));
        if self.nodes.0 < 2 || self.nodes.0 > self.nodes.1 {
            return bad("node range must satisfy 2 <= lo <= hi");
        }
        if self.required == 0 {
            return bad("needs at least one required edge");
        }
        if self.demand.0 == 0 || self.demand.0 > self.demand.1 || self.demand.1 > self.capacity {
            return bad("demand range must satisfy 1 <= lo <= hi <= capacity");
        }
        let max_edges = self.nodes.0 * (self.nodes.0 - 1) / 2;
        if self.required > max_edges {
            return bad("more required edges than a simple graph on the node range can hold");
        }
        Ok(())
    }

    /// Seed of instance `index` in split `split` (0 train, 1 test).
    pub fn instance_seed(&self, split: u64, index: usize) -> u64 {
        self.seed
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(split << 40)
            .wrapping_add(index as u64)
    }
}

fn euclid(a: (f64, f64), b: (f64, f64)) -> f64 {
    ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()
}

/// Relative-neighborhood graph: `i ~ j` unless some third point is closer
/// to both of them than they are to each other.
pub fn relative_neighborhood(points: &[(f64, f64)]) -> Vec<(usize, usize)> {
    let n = points.len();
    let mut out = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let dij = euclid(points[i], points[j]);
            let blocked = (0..n).any(|k| {
                k != i && k != j && euclid(points[i], points[k]).max(euclid(points[j], points[k])) < dij
            });
            if !blocked {
                out.push((i, j));
            }
        }
    }
    out
}

/// Road-like random instance named `name`.
pub fn generate_instance<R: Rng>(spec: &DatasetSpec, name: &str, rng: &mut R) -> Result<Instance> {
    spec.validate()?;
    let n = rng.gen_range(spec.nodes.0..=spec.nodes.1);
    let points: Vec<(f64, f64)> = (0..n).map(|_| (rng.gen::<f64>(), rng.gen::<f64>())).collect();
    let mut adjacent = vec![vec![false; n]; n];
    let mut pairs = relative_neighborhood(&points);
    for &(i, j) in &pairs {
        adjacent[i][j] = true;
        adjacent[j][i] = true;
    }
    let target = ((1.3 * n as f64).ceil() as usize).max(spec.required).min(n * (n - 1) / 2);
    let mut attempts = 0;
    while pairs.len() < target {
        attempts += 1;
        if attempts > 100 * target {
            return Err(CarpError::InvalidInstance(format!("{name}: could not add enough edges")));
        }
        let i = rng.gen_range(0..n);
        let mut near: Vec<usize> = (0..n).filter(|&j| j != i && !adjacent[i][j]).collect();
        if near.is_empty() {
            continue;
        }
        near.sort_by(|&a, &b| euclid(points[i], points[a]).total_cmp(&euclid(points[i], points[b])));
        near.truncate(3);
        let j = near[rng.gen_range(0..near.len())];
        adjacent[i][j] = true;
        adjacent[j][i] = true;
        pairs.push((i.min(j), i.max(j)));
    }
    let required = sample(rng, pairs.len(), spec.required).into_vec();
    let mut is_required = vec![false; pairs.len()];
    for r in required {
        is_required[r] = true;
    }
    let edges = pairs
        .iter()
        .zip(&is_required)
        .map(|(&(u, v), &req)| {
            let cost = ((100.0 * euclid(points[u], points[v])).round() as i64).max(1);
            if req {
                Edge::required(u, v, cost, rng.gen_range(spec.demand.0..=spec.demand.1))
            } else {
                Edge::deadhead(u, v, cost)
            }
        })
        .collect();
    let inst = Instance {
        name: name.to_string(),
        node_count: n,
        depot: rng.gen_range(0..n),
        capacity: spec.capacity,
        edges,
    };
    inst.check()?;
    Ok(inst)
}

/// Instance `index` of the given split, reproducible from the spec alone.
/// Construction failures are retried with a derived seed.
pub fn dataset_instance(spec: &DatasetSpec, test: bool, index: usize) -> Result<Instance> {
    let split = test as u64;
    let name = format!("{}-{}-{index}", spec.name, if test { "test" } else { "train" });
    let mut last_err = None;
    for retry in 0..3u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.instance_seed(split, index) ^ (retry << 56));
        match generate_instance(spec, &name, &mut rng) {
            Ok(inst) => return Ok(inst),
            Err(e) => last_err = Some(e),
        }
    }
    Err(last_err.expect("at least one attempt"))
}

/// Training and test instances of a spec.
pub fn generate_dataset(spec: &DatasetSpec) -> Result<(Vec<Instance>, Vec<Instance>)> {
    let train = (0..spec.train_count).map(|i| dataset_instance(spec, false, i)).collect::<Result<_>>()?;
    let test = (0..spec.test_count).map(|i| dataset_instance(spec, true, i)).collect::<Result<_>>()?;
    Ok((train, test))
}

/// Concatenated instance texts.
pub fn instances_to_text(instances: &[Instance]) -> String {
    instances.iter().map(|i| i.to_text()).collect()
}

/// Parses a concatenation of instance blocks, each closed by `END`.
pub fn parse_instances(text: &str) -> Result<Vec<Instance>> {
    let mut out = Vec::new();
    let mut block = String::new();
    let mut block_start = 1;
    for (i, line) in text.lines().enumerate() {
        if block.is_empty() {
            block_start = i + 1;
        }
        block.push_str(line);
        block.push('\n');
        if line.split('#').next().unwrap_or("").trim() == "END" {
            out.push(Instance::parse(&block).map_err(|e| shift_line(e, block_start - 1))?);
            block.clear();
        }
    }
    if block.lines().any(|l| !l.split('#').next().unwrap_or("").trim().is_empty()) {
        return Err(CarpError::Format {
            line: block_start,
            message: "instance block without `END`".into(),
        });
    }
    Ok(out)
}

fn shift_line(e: CarpError, offset: usize) -> CarpError {
    match e {
        CarpError::Format { line, message } => CarpError::Format {
            line: line + offset,
            message,
        },
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shortest_path::all_pairs_shortest_paths;

    #[test]
    fn task20_mini_fields() {
        let spec = DatasetSpec::preset("Task20-mini").unwrap();
        assert_eq!((spec.train_count, spec.test_count), (500, 200));
        for i in 0..10 {
            let inst = dataset_instance(&spec, false, i).unwrap();
            assert!((25..=30).contains(&inst.node_count));
            assert_eq!(inst.required_count(), 20);
            assert_eq!(inst.capacity, 100);
            assert!(inst.edges.len() as f64 >= 1.3 * inst.node_count as f64);
            assert!(inst.required_edges().all(|(_, e)| (5..=10).contains(&e.demand)));
            assert!(inst.edges.iter().all(|e| e.cost >= 1));
            assert!(inst.validate().is_empty());
            all_pairs_shortest_paths(&inst).unwrap();
        }
    }

    #[test]
    fn generation_is_reproducible() {
        let spec = DatasetSpec {
            train_count: 3,
            test_count: 2,
            ..DatasetSpec::mini(30).unwrap()
        };
        let a = generate_dataset(&spec).unwrap();
        let b = generate_dataset(&spec).unwrap();
        assert_eq!(instances_to_text(&a.0), instances_to_text(&b.0));
        assert_ne!(instances_to_text(&a.0), instances_to_text(&a.1));
        assert_eq!(parse_instances(&instances_to_text(&a.1)).unwrap(), a.1);
    }

    #[test]
    fn parse_error_line_is_absolute() {
        let spec = DatasetSpec::mini(20).unwrap();
        let inst = dataset_instance(&spec, true, 0).unwrap();
        let text = instances_to_text(&[inst.clone(), inst]);
        let first_len = text.lines().count() / 2;
        let mut lines: Vec<&str> = text.lines().collect();
        lines[first_len + 3] = "CAPACITY lots";
        let err = parse_instances(&lines.join("\n")).unwrap_err();
        assert!(matches!(err, CarpError::Format { line, .. } if line == first_len + 4), "{err}");
    }

    #[test]
    fn rng_graph_of_square_corners() {
        let pts = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.1), (0.0, 1.1)];
        assert_eq!(relative_neighborhood(&pts), vec![(0, 1), (0, 3), (1, 2), (2, 3)]);
    }

    #[test]
    fn tiny_node_ranges_still_generate() {
        for required in 1..=3 {
            let spec = DatasetSpec {
                name: "tiny".into(),
                train_count: 0,
                test_count: 40,
                nodes: (3, 3),
                required,
                demand: (1, 5),
                capacity: 10,
                seed: 3,
            };
            for i in 0..spec.test_count {
                let inst = dataset_instance(&spec, true, i).unwrap();
                assert_eq!(inst.edges.len(), 3);
                assert_eq!(inst.required_count(), required);
            }
        }
    }
}

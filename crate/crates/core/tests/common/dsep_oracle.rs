//! Exhaustive d-separation reference by enumerating simple paths.

use std::collections::HashMap;

use hypothetica::graph::{d_separated, read_graph, CausalGraph, Role};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::fixture;

pub fn random_dag(rng: &mut impl Rng, n: usize, p_edge: f64) -> CausalGraph {
    let names: Vec<String> = (0..n).map(|i| format!("V{i}")).collect();
    // Random topological order so that node ids are not already sorted.
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        order.swap(i, rng.random_range(0..=i));
    }
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random::<f64>() < p_edge {
                edges.push((names[order[i]].clone(), names[order[j]].clone()));
            }
        }
    }
    let nodes: Vec<(String, Role)> = names.iter().map(|s| (s.clone(), Role::Other)).collect();
    CausalGraph::build(&nodes, &edges).unwrap()
}

/// Exhaustive reference: enumerate every simple path of the skeleton from
/// `x` to `y` and test each for being open given `z`.
fn connected_by_enumeration(g: &CausalGraph, x: usize, y: usize, z: &[bool]) -> bool {
    let n = g.len();
    let mut z_anc = vec![false; n];
    for v in 0..n {
        if z[v] {
            for (u, &anc) in g.ancestors_mask(&[v]).iter().enumerate() {
                if anc {
                    z_anc[u] = true;
                }
            }
            z_anc[v] = true;
        }
    }
    let neighbours: Vec<Vec<usize>> = (0..n).map(|v| g.parents(v).iter().chain(g.children(v)).copied().collect()).collect();
    let mut path = vec![x];
    let mut on_path = vec![false; n];
    on_path[x] = true;
    fn open(g: &CausalGraph, path: &[usize], z: &[bool], z_anc: &[bool]) -> bool {
        path.windows(3).all(|w| {
            let collider = g.has_edge(w[0], w[1]) && g.has_edge(w[2], w[1]);
            if collider {
                z_anc[w[1]]
            } else {
                !z[w[1]]
            }
        })
    }
    #[allow(clippy::too_many_arguments)]
    fn dfs(
        g: &CausalGraph,
        nb: &[Vec<usize>],
        y: usize,
        path: &mut Vec<usize>,
        on_path: &mut Vec<bool>,
        z: &[bool],
        z_anc: &[bool],
    ) -> bool {
        let last = *path.last().unwrap();
        if last == y {
            return open(g, path, z, z_anc);
        }
        for &next in &nb[last] {
            if on_path[next] {
                continue;
            }
            path.push(next);
            on_path[next] = true;
            let found = dfs(g, nb, y, path, on_path, z, z_anc);
            path.pop();
            on_path[next] = false;
            if found {
                return true;
            }
        }
        false
    }
    dfs(g, &neighbours, y, &mut path, &mut on_path, z, &z_anc)
}

pub fn fixture_graphs() -> Vec<(String, CausalGraph)> {
    let mut out: Vec<(String, CausalGraph)> = ["single_treatment.graph", "time_varying_treatment.graph", "single_ice.graph", "two_ice.graph"]
        .iter()
        .map(|f| (f.to_string(), read_graph(fixture(f)).unwrap()))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for i in 0..20 {
        let n = rng.random_range(3..=8);
        out.push((format!("random {i}"), random_dag(&mut rng, n, 0.35)));
    }
    out
}

/// Compares the crate against the enumeration oracle on every assignment of
/// nodes to X, Y, Z or none with X and Y non-empty. Returns the number of
/// triples checked, or the first disagreement.
pub fn compare_all_triples(g: &CausalGraph) -> Result<usize, String> {
    let n = g.len();
    // pair[x][y][zmask] via the oracle; zmask over all nodes.
    let mut cache: HashMap<(usize, usize, u32), bool> = HashMap::new();
    let mut checked = 0;
    let total = 4usize.pow(n as u32);
    for code in 0..total {
        let mut c = code;
        let (mut xs, mut ys, mut zs) = (Vec::new(), Vec::new(), Vec::new());
        let mut zmask = 0u32;
        for v in 0..n {
            match c % 4 {
                1 => xs.push(v),
                2 => ys.push(v),
                3 => {
                    zs.push(v);
                    zmask |= 1 << v;
                }
                _ => {}
            }
            c /= 4;
        }
        if xs.is_empty() || ys.is_empty() {
            continue;
        }
        let z: Vec<bool> = (0..n).map(|v| zmask >> v & 1 == 1).collect();
        let expected = xs.iter().all(|&x| {
            ys.iter().all(|&y| {
                let key = (x.min(y), x.max(y), zmask);
                !*cache.entry(key).or_insert_with(|| connected_by_enumeration(g, x, y, &z))
            })
        });
        let got = d_separated(g, &xs, &ys, &zs).unwrap();
        if got != expected {
            return Err(format!("X={xs:?} Y={ys:?} Z={zs:?}: crate says {got}, enumeration says {expected}"));
        }
        checked += 1;
    }
    Ok(checked)
}

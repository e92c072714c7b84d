//! Fill-reducing ordering by nested dissection with level-structure separators.

use super::CsrMatrix;

const LEAF_SIZE: usize = 48;

/// Adjacency of the symmetrized pattern `A + Aᵀ` without the diagonal.
fn symmetric_adjacency(a: &CsrMatrix) -> Vec<Vec<usize>> {
    let n = a.nrows();
    let mut adj = vec![Vec::new(); n];
    for (i, j, _) in a.triplets() {
        if i != j {
            adj[i].push(j);
            adj[j].push(i);
        }
    }
    for list in &mut adj {
        list.sort_unstable();
        list.dedup();
    }
    adj
}

struct Dissector<'a> {
    adj: &'a [Vec<usize>],
    // nodes of the subgraph being split share one region id
    region: Vec<usize>,
    next_region: usize,
    level: Vec<usize>,
    stamp: Vec<usize>,
    cur_stamp: usize,
    order: Vec<usize>,
}

impl Dissector<'_> {
    /// Breadth-first level structure from `root` inside region `id`; returns the depth.
    fn bfs(&mut self, root: usize, id: usize, nodes: &mut Vec<usize>) -> usize {
        self.cur_stamp += 1;
        nodes.clear();
        self.level[root] = 0;
        self.stamp[root] = self.cur_stamp;
        nodes.push(root);
        let mut head = 0;
        let mut depth = 0;
        while head < nodes.len() {
            let v = nodes[head];
            head += 1;
            let lv = self.level[v];
            depth = depth.max(lv);
            for &w in &self.adj[v] {
                if self.region[w] == id && self.stamp[w] != self.cur_stamp {
                    self.stamp[w] = self.cur_stamp;
                    self.level[w] = lv + 1;
                    nodes.push(w);
                }
            }
        }
        depth
    }

    fn components(&mut self, nodes: &[usize], id: usize) -> Vec<Vec<usize>> {
        self.cur_stamp += 1;
        let s = self.cur_stamp;
        let mut out = Vec::new();
        for &start in nodes {
            if self.stamp[start] == s {
                continue;
            }
            self.stamp[start] = s;
            let mut comp = vec![start];
            let mut head = 0;
            while head < comp.len() {
                let v = comp[head];
                head += 1;
                for &w in &self.adj[v] {
                    if self.region[w] == id && self.stamp[w] != s {
                        self.stamp[w] = s;
                        comp.push(w);
                    }
                }
            }
            out.push(comp);
        }
        out
    }

    fn dissect(&mut self, nodes: Vec<usize>, id: usize) {
        if nodes.len() <= LEAF_SIZE {
            self.order.extend(nodes);
            return;
        }
        let mut comps = self.components(&nodes, id);
        if comps.len() > 1 {
            for comp in comps {
                if comp.len() <= LEAF_SIZE {
                    self.order.extend(comp);
                } else {
                    let r = self.fresh(&comp);
                    self.dissect(comp, r);
                }
            }
            return;
        }
        let mut comp = comps.pop().unwrap();
        // pseudo-peripheral root
        let mut root = nodes[0];
        let mut best = self.bfs(root, id, &mut comp);
        for _ in 0..4 {
            let far = *comp
                .iter()
                .max_by_key(|&&v| (self.level[v], std::cmp::Reverse(self.adj[v].len()), std::cmp::Reverse(v)))
                .unwrap();
            let d = self.bfs(far, id, &mut comp);
            if d > best {
                best = d;
                root = far;
            } else {
                break;
            }
        }
        let depth = self.bfs(root, id, &mut comp);
        if depth < 2 {
            self.order.extend(comp);
            return;
        }
        let mut counts = vec![0usize; depth + 1];
        for &v in &comp {
            counts[self.level[v]] += 1;
        }
        let half = comp.len() / 2;
        let mut acc = 0;
        let mut sep_level = 1;
        for (l, &c) in counts.iter().enumerate() {
            acc += c;
            if acc >= half {
                sep_level = l.clamp(1, depth - 1);
                break;
            }
        }
        let mut part_a = Vec::new();
        let mut part_b = Vec::new();
        let mut sep = Vec::new();
        for &v in &comp {
            let l = self.level[v];
            if l < sep_level {
                part_a.push(v);
            } else if l > sep_level {
                part_b.push(v);
            } else if self.adj[v].iter().any(|&w| self.region[w] == id && self.level[w] == sep_level + 1) {
                sep.push(v);
            } else {
                // no neighbour beyond the separator level
                part_a.push(v);
            }
        }
        let ra = self.fresh(&part_a);
        let rb = self.fresh(&part_b);
        self.fresh(&sep);
        self.dissect(part_a, ra);
        self.dissect(part_b, rb);
        self.order.extend(sep);
    }

    fn fresh(&mut self, nodes: &[usize]) -> usize {
        self.next_region += 1;
        for &v in nodes {
            self.region[v] = self.next_region;
        }
        self.next_region
    }
}

/// Elimination order (`order[k]` is the k-th eliminated row/column).
pub fn nested_dissection(a: &CsrMatrix) -> Vec<usize> {
    let n = a.nrows();
    let adj = symmetric_adjacency(a);
    let mut d = Dissector {
        adj: &adj,
        region: vec![0; n],
        next_region: 0,
        level: vec![0; n],
        stamp: vec![0; n],
        cur_stamp: 0,
        order: Vec::with_capacity(n),
    };
    d.dissect((0..n).collect(), 0);
    d.order
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ordering_is_a_permutation() {
        // 2D 5-point Laplacian pattern on a 30x30 grid
        let m = 30;
        let mut trip = Vec::new();
        for j in 0..m {
            for i in 0..m {
                let k = j * m + i;
                trip.push((k, k, 4.0));
                if i + 1 < m {
                    trip.push((k, k + 1, -1.0));
                    trip.push((k + 1, k, -1.0));
                }
                if j + 1 < m {
                    trip.push((k, k + m, -1.0));
                    trip.push((k + m, k, -1.0));
                }
            }
        }
        let a = CsrMatrix::from_triplets(m * m, m * m, &trip);
        let mut order = nested_dissection(&a);
        assert_eq!(order.len(), m * m);
        order.sort_unstable();
        assert!(order.iter().enumerate().all(|(i, &v)| i == v));
    }

    #[test]
    fn disconnected_graph() {
        let a = CsrMatrix::identity(100);
        let mut order = nested_dissection(&a);
        order.sort_unstable();
        assert_eq!(order, (0..100).collect::<Vec<_>>());
    }
}

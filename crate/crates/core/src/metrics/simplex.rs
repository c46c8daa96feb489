//! Primal network simplex for the dense bipartite transportation problem.
//!
//! Spanning-tree bookkeeping (parent/thread/successor counts) follows the
//! classic strongly-feasible-tree formulation with block-search pricing.

const STATE_UPPER: i8 = -1;
const STATE_TREE: i8 = 0;
const STATE_LOWER: i8 = 1;
const DIR_UP: i8 = 1;
const DIR_DOWN: i8 = -1;

/// Optimal plan: total cost plus the non-zero flows `(source, sink, mass)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    pub cost: f64,
    pub flows: Vec<(usize, usize, f64)>,
}

struct Solver<'a> {
    n_src: usize,
    n_dst: usize,
    cost: &'a [f64],
    // Arcs `0..n_src*n_dst` are the real ones; artificial arcs follow.
    art_source: Vec<usize>,
    art_target: Vec<usize>,
    art_cost: Vec<f64>,
    flow: Vec<f64>,
    state: Vec<i8>,
    pi: Vec<f64>,
    parent: Vec<usize>,
    pred: Vec<usize>,
    pred_dir: Vec<i8>,
    thread: Vec<usize>,
    rev_thread: Vec<usize>,
    succ_num: Vec<usize>,
    last_succ: Vec<usize>,
    dirty_revs: Vec<usize>,
    block: usize,
    next_arc: usize,
    tol: f64,
    in_arc: usize,
    join: usize,
    u_in: usize,
    v_in: usize,
    u_out: usize,
    delta: f64,
}

const NONE: usize = usize::MAX;

impl<'a> Solver<'a> {
    fn real_arcs(&self) -> usize {
        self.n_src * self.n_dst
    }

    #[inline]
    fn source(&self, e: usize) -> usize {
        if e < self.real_arcs() {
            e / self.n_dst
        } else {
            self.art_source[e - self.real_arcs()]
        }
    }

    #[inline]
    fn target(&self, e: usize) -> usize {
        if e < self.real_arcs() {
            self.n_src + e % self.n_dst
        } else {
            self.art_target[e - self.real_arcs()]
        }
    }

    #[inline]
    fn arc_cost(&self, e: usize) -> f64 {
        if e < self.real_arcs() {
            self.cost[e]
        } else {
            self.art_cost[e - self.real_arcs()]
        }
    }

    fn new(supply: &[f64], demand: &[f64], cost: &'a [f64]) -> Self {
        let (n_src, n_dst) = (supply.len(), demand.len());
        let nodes = n_src + n_dst;
        let real = n_src * n_dst;
        let max_cost = cost.iter().fold(0.0f64, |m, &c| m.max(c.abs()));
        let art = (max_cost + 1.0) * (nodes as f64 + 1.0);
        let root = nodes;
        let mut s = Solver {
            n_src,
            n_dst,
            cost,
            art_source: vec![0; nodes],
            art_target: vec![0; nodes],
            art_cost: vec![0.0; nodes],
            flow: vec![0.0; real + nodes],
            state: vec![STATE_LOWER; real + nodes],
            pi: vec![0.0; nodes + 1],
            parent: vec![NONE; nodes + 1],
            pred: vec![NONE; nodes + 1],
            pred_dir: vec![DIR_UP; nodes + 1],
            thread: vec![0; nodes + 1],
            rev_thread: vec![0; nodes + 1],
            succ_num: vec![1; nodes + 1],
            last_succ: vec![0; nodes + 1],
            dirty_revs: Vec::new(),

            block: ((real as f64).sqrt().ceil() as usize).max(10).min(real.max(1)),
            next_arc: 0,
            tol: 1e-13 * (max_cost + 1.0),
            in_arc: 0,
            join: 0,
            u_in: 0,
            v_in: 0,
            u_out: 0,
            delta: 0.0,
        };
        for u in 0..nodes {
            let sup = if u < n_src { supply[u] } else { -demand[u - n_src] };
            let e = real + u;
            s.parent[u] = root;
            s.pred[u] = e;
            s.thread[u] = u + 1;
            s.rev_thread[u + 1] = u;
            s.succ_num[u] = 1;
            s.last_succ[u] = u;
            s.state[e] = STATE_TREE;
            if sup >= 0.0 {
                s.pred_dir[u] = DIR_UP;
                s.pi[u] = 0.0;
                s.art_source[u] = u;
                s.art_target[u] = root;
                s.flow[e] = sup;
                s.art_cost[u] = 0.0;
            } else {
                s.pred_dir[u] = DIR_DOWN;
                s.pi[u] = art;
                s.art_source[u] = root;
                s.art_target[u] = u;
                s.flow[e] = -sup;
                s.art_cost[u] = art;
            }
        }
        s.thread[root] = 0;
        s.rev_thread[0] = root;
        s.succ_num[root] = nodes + 1;
        s.last_succ[root] = root - 1;
        s
    }

    #[inline]
    fn reduced(&self, e: usize) -> f64 {
        self.state[e] as f64 * (self.arc_cost(e) + self.pi[self.source(e)] - self.pi[self.target(e)])
    }

    fn find_entering_arc(&mut self) -> bool {
        let m = self.real_arcs();
        let mut min = -self.tol;
        let mut found = false;
        let mut cnt = self.block;
        for step in 0..m {
            let e = (self.next_arc + step) % m;
            if self.state[e] != STATE_TREE {
                let c = self.reduced(e);
                if c < min {
                    min = c;
                    self.in_arc = e;
                    found = true;
                }
            }
            cnt -= 1;
            if cnt == 0 {
                if found {
                    self.next_arc = (e + 1) % m;
                    return true;
                }
                cnt = self.block;
            }
        }
        if found {
            self.next_arc = (self.in_arc + 1) % m;
        }
        found
    }

    fn find_join_node(&mut self) {
        let mut u = self.source(self.in_arc);
        let mut v = self.target(self.in_arc);
        while u != v {
            if self.succ_num[u] < self.succ_num[v] {
                u = self.parent[u];
            } else {
                v = self.parent[v];
            }
        }
        self.join = u;
    }

    /// Returns false when the cycle is unbounded (cannot happen for a
    /// balanced transportation problem).
    fn find_leaving_arc(&mut self) -> bool {
        let (first, second) = if self.state[self.in_arc] == STATE_LOWER {
            (self.source(self.in_arc), self.target(self.in_arc))
        } else {
            (self.target(self.in_arc), self.source(self.in_arc))
        };
        self.delta = f64::INFINITY;
        let mut result = 0;
        let mut u = first;
        while u != self.join {
            let e = self.pred[u];
            let d = if self.pred_dir[u] == DIR_UP { self.flow[e] } else { f64::INFINITY };
            if d < self.delta {
                self.delta = d;
                self.u_out = u;
                result = 1;
            }
            u = self.parent[u];
        }
        let mut u = second;
        while u != self.join {
            let e = self.pred[u];
            let d = if self.pred_dir[u] == DIR_UP { f64::INFINITY } else { self.flow[e] };
            if d <= self.delta {
                self.delta = d;
                self.u_out = u;
                result = 2;
            }
            u = self.parent[u];
        }
        if result == 1 {
            self.u_in = first;
            self.v_in = second;
        } else {
            self.u_in = second;
            self.v_in = first;
        }
        result > 0
    }

    fn change_flow(&mut self, change: bool) {
        if self.delta > 0.0 {
            let val = self.state[self.in_arc] as f64 * self.delta;
            self.flow[self.in_arc] += val;
            let mut u = self.source(self.in_arc);
            while u != self.join {
                let e = self.pred[u];
                self.flow[e] -= self.pred_dir[u] as f64 * val;
                u = self.parent[u];
            }
            let mut u = self.target(self.in_arc);
            while u != self.join {
                let e = self.pred[u];
                self.flow[e] += self.pred_dir[u] as f64 * val;
                u = self.parent[u];
            }
        }
        if change {
            self.state[self.in_arc] = STATE_TREE;
            let out = self.pred[self.u_out];
            self.state[out] = if self.flow[out] == 0.0 { STATE_LOWER } else { STATE_UPPER };
        } else {
            self.state[self.in_arc] = -self.state[self.in_arc];
        }
    }

    fn update_tree(&mut self) {
        let (u_in, v_in, u_out, join) = (self.u_in, self.v_in, self.u_out, self.join);
        let old_rev_thread = self.rev_thread[u_out];
        let old_succ_num = self.succ_num[u_out];
        let old_last_succ = self.last_succ[u_out];
        let v_out = self.parent[u_out];
        let in_dir = if u_in == self.source(self.in_arc) { DIR_UP } else { DIR_DOWN };

        if u_in == u_out {
            self.parent[u_in] = v_in;
            self.pred[u_in] = self.in_arc;
            self.pred_dir[u_in] = in_dir;
            if self.thread[v_in] != u_out {
                let mut after = self.thread[old_last_succ];
                self.thread[old_rev_thread] = after;
                self.rev_thread[after] = old_rev_thread;
                after = self.thread[v_in];
                self.thread[v_in] = u_out;
                self.rev_thread[u_out] = v_in;
                self.thread[old_last_succ] = after;
                self.rev_thread[after] = old_last_succ;
            }
        } else {
            let thread_continue = if old_rev_thread == v_in {
                self.thread[old_last_succ]
            } else {
                self.thread[v_in]
            };
            let mut stem = u_in;
            let mut par_stem = v_in;
            let mut last = self.last_succ[u_in];
            let mut after = self.thread[last];
            self.thread[v_in] = u_in;
            self.dirty_revs.clear();
            self.dirty_revs.push(v_in);
            while stem != u_out {
                let next_stem = self.parent[stem];
                self.thread[last] = next_stem;
                self.dirty_revs.push(last);
                let before = self.rev_thread[stem];
                self.thread[before] = after;
                self.rev_thread[after] = before;
                self.parent[stem] = par_stem;
                par_stem = stem;
                stem = next_stem;
                last = if self.last_succ[stem] == self.last_succ[par_stem] {
                    self.rev_thread[par_stem]
                } else {
                    self.last_succ[stem]
                };
                after = self.thread[last];
            }
            self.parent[u_out] = par_stem;
            self.thread[last] = thread_continue;
            self.rev_thread[thread_continue] = last;
            self.last_succ[u_out] = last;
            if old_rev_thread != v_in {
                self.thread[old_rev_thread] = after;
                self.rev_thread[after] = old_rev_thread;
            }
            for i in 0..self.dirty_revs.len() {
                let u = self.dirty_revs[i];
                let t = self.thread[u];
                self.rev_thread[t] = u;
            }
            let mut tmp_sc = 0usize;
            let tmp_ls = self.last_succ[u_out];
            let mut u = u_out;
            while u != u_in {
                let p = self.parent[u];
                self.pred[u] = self.pred[p];
                self.pred_dir[u] = -self.pred_dir[p];
                tmp_sc = tmp_sc + self.succ_num[u] - self.succ_num[p];
                self.succ_num[u] = tmp_sc;
                self.last_succ[p] = tmp_ls;
                u = p;
            }
            self.pred[u_in] = self.in_arc;
            self.pred_dir[u_in] = in_dir;
            self.succ_num[u_in] = old_succ_num;
        }

        let up_limit_out = if self.last_succ[join] == v_in { join } else { NONE };
        let last_succ_out = self.last_succ[u_out];
        let mut u = v_in;
        while u != NONE && self.last_succ[u] == v_in {
            self.last_succ[u] = last_succ_out;
            u = self.parent[u];
        }
        if join != old_rev_thread && v_in != old_rev_thread {
            let mut u = v_out;
            while u != up_limit_out && self.last_succ[u] == old_last_succ {
                self.last_succ[u] = old_rev_thread;
                u = self.parent[u];
            }
        } else if last_succ_out != old_last_succ {
            let mut u = v_out;
            while u != up_limit_out && self.last_succ[u] == old_last_succ {
                self.last_succ[u] = last_succ_out;
                u = self.parent[u];
            }
        }
        let mut u = v_in;
        while u != join {
            self.succ_num[u] += old_succ_num;
            u = self.parent[u];
        }
        let mut u = v_out;
        while u != join {
            self.succ_num[u] -= old_succ_num;
            u = self.parent[u];
        }
    }

    fn update_potential(&mut self) {
        let sigma = self.pi[self.v_in] - self.pi[self.u_in] - self.pred_dir[self.u_in] as f64 * self.arc_cost(self.in_arc);
        let end = self.thread[self.last_succ[self.u_in]];
        let mut u = self.u_in;
        while u != end {
            self.pi[u] += sigma;
            u = self.thread[u];
        }
    }

    fn run(&mut self) -> bool {
        while self.find_entering_arc() {
            self.find_join_node();
            let change = self.find_leaving_arc();
            if self.delta.is_infinite() {
                return false;
            }
            self.change_flow(change);
            if change {
                self.update_tree();
                self.update_potential();
            }
        }
        true
    }
}

/// Solves `min Σ c_ij x_ij` subject to row sums `supply` and column sums
/// `demand` with `x ≥ 0`. `cost` is row-major `supply.len() × demand.len()`.
/// Total supply and demand must agree; any tiny imbalance is left on the
/// artificial arcs and ignored.
pub fn transport(supply: &[f64], demand: &[f64], cost: &[f64]) -> TransportPlan {
    assert_eq!(cost.len(), supply.len() * demand.len());
    if supply.is_empty() || demand.is_empty() {
        return TransportPlan { cost: 0.0, flows: Vec::new() };
    }
    let mut solver = Solver::new(supply, demand, cost);
    let ok = solver.run();
    debug_assert!(ok, "balanced transportation problems are bounded");
    let mut total = 0.0;
    let mut flows = Vec::new();
    for e in 0..solver.real_arcs() {
        let f = solver.flow[e];
        if f > 0.0 {
            total += f * cost[e];
            flows.push((e / demand.len(), e % demand.len(), f));
        }
    }
    TransportPlan { cost: total, flows }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_arc() {
        let p = transport(&[1.0], &[1.0], &[3.5]);
        assert_eq!(p.cost, 3.5);
        assert_eq!(p.flows, vec![(0, 0, 1.0)]);
    }

    #[test]
    fn textbook_instance() {
        // Supplies 20/30/25, demands 10/35/30; optimum found by hand-checked LP.
        let cost = [8.0, 6.0, 10.0, 9.0, 12.0, 13.0, 14.0, 9.0, 16.0];
        let p = transport(&[20.0, 30.0, 25.0], &[10.0, 35.0, 30.0], &cost);
        let mut rows = [0.0; 3];
        let mut cols = [0.0; 3];
        for &(i, j, f) in &p.flows {
            rows[i] += f;
            cols[j] += f;
        }
        assert_eq!(rows, [20.0, 30.0, 25.0]);
        assert_eq!(cols, [10.0, 35.0, 30.0]);
        // Brute force over the two free variables of the 3x3 plan on a unit grid.
        let mut best = f64::INFINITY;
        for x00 in 0..=20 {
            for x01 in 0..=(20 - x00) {
                for x10 in 0..=30 {
                    for x11 in 0..=(30 - x10) {
                        let x02 = 20 - x00 - x01;
                        let x12 = 30 - x10 - x11;
                        let x20 = 10 - x00 - x10;
                        let x21 = 35 - x01 - x11;
                        let x22 = 30 - x02 - x12;
                        if x20 < 0 || x21 < 0 || x22 < 0 || x20 + x21 + x22 != 25 {
                            continue;
                        }
                        let x = [x00 as f64, x01 as f64, x02 as f64, x10 as f64, x11 as f64, x12 as f64, x20 as f64, x21 as f64, x22 as f64];
                        let c: f64 = x.iter().zip(&cost).map(|(a, b)| a * b).sum();
                        best = best.min(c);
                    }
                }
            }
        }
        assert!((p.cost - best).abs() < 1e-9, "{} vs {best}", p.cost);
    }

    #[test]
    fn zero_mass_nodes_are_harmless() {
        let p = transport(&[0.5, 0.0, 0.5], &[0.5, 0.5], &[1.0, 2.0, 0.0, 0.0, 2.0, 1.0]);
        assert!((p.cost - 1.0).abs() < 1e-12);
    }
}

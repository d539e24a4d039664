//! Positive-sequence feeder model: nodal admittance assembly, slack
//! partitioning, no-load voltage and the normalized impedance operator.

use std::collections::VecDeque;
use std::sync::OnceLock;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{norm_inf, CsrMatrix, DenseMatrix, SparseLu};

/// Index of a bus as supplied by the caller. The slack may carry any index;
/// it is moved to position 0 internally.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BusId(pub usize);

/// Series branch with an optional total line-charging susceptance, split
/// equally between both ends.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineSpec {
    pub from: BusId,
    pub to: BusId,
    pub resistance: f64,
    pub reactance: f64,
    #[serde(default)]
    pub shunt_susceptance: f64,
}

impl LineSpec {
    pub fn new(from: usize, to: usize, resistance: f64, reactance: f64) -> Self {
        Self {
            from: BusId(from),
            to: BusId(to),
            resistance,
            reactance,
            shunt_susceptance: 0.0,
        }
    }

    pub fn impedance(&self) -> Complex64 {
        Complex64::new(self.resistance, self.reactance)
    }
}

/// Shunt susceptance in siemens attached to a bus.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BusShunt {
    pub bus: BusId,
    pub susceptance: f64,
}

/// Radial structure of a shunt-free tree feeder. For such feeders
/// `W*[i][j] = Z(lca(i, j)) / |v0|^2`, where `Z(k)` is the series impedance
/// of the path from the slack to `k`.
#[derive(Clone, Debug)]
pub struct RadialTree {
    /// Parent PQ position, `None` when the parent is the slack.
    pub(crate) parent: Vec<Option<usize>>,
    /// PQ positions with every parent listed before its children.
    pub(crate) topo: Vec<usize>,
    /// `(|Z(i)| - |Z(parent)|) / |v0|^2`.
    pub(crate) dz: Vec<f64>,
    pub(crate) leaves: Vec<usize>,
    /// True when `dz >= 0` everywhere, so row sums grow away from the slack
    /// and the maximum is attained at a leaf.
    pub(crate) monotone: bool,
    path_impedance: Vec<Complex64>,
}

impl RadialTree {
    pub fn path_impedance(&self) -> &[Complex64] {
        &self.path_impedance
    }

    pub fn leaves(&self) -> &[usize] {
        &self.leaves
    }

    pub fn is_monotone(&self) -> bool {
        self.monotone
    }
}

/// Immutable feeder model. Vectors indexed by "PQ position" have length
/// `n_pq()`; position `k` is internal bus `k + 1`.
#[derive(Debug)]
pub struct NetworkModel {
    n: usize,
    slack_voltage: Complex64,
    /// Internal index to caller index.
    external: Vec<BusId>,
    /// Caller index to internal index.
    internal: Vec<Option<usize>>,
    y_full: CsrMatrix,
    y00: Complex64,
    y0l: Vec<Complex64>,
    yl0: Vec<Complex64>,
    yll: CsrMatrix,
    lu: SparseLu,
    w: Vec<Complex64>,
    w_abs: Vec<f64>,
    radial: Option<RadialTree>,
    abs_w_star: OnceLock<DenseMatrix<f64>>,
}

/// Builds a shunt-free network. The bus count is inferred from the largest
/// index referenced by `lines` or `slack`.
pub fn build_network(lines: &[LineSpec], slack: BusId, slack_voltage: Complex64) -> Result<NetworkModel> {
    let n_buses = lines
        .iter()
        .flat_map(|l| [l.from.0, l.to.0])
        .chain(std::iter::once(slack.0))
        .max()
        .unwrap_or(0)
        + 1;
    NetworkModel::build(n_buses, lines, &[], slack, slack_voltage)
}

impl NetworkModel {
    pub fn build(
        n_buses: usize,
        lines: &[LineSpec],
        shunts: &[BusShunt],
        slack: BusId,
        slack_voltage: Complex64,
    ) -> Result<Self> {
        if slack.0 >= n_buses {
            return Err(Error::BusOutOfRange {
                index: slack.0,
                n_buses,
            });
        }
        if n_buses < 2 {
            return Err(Error::EmptyNetwork);
        }
        for (k, line) in lines.iter().enumerate() {
            validate_line(k, line, n_buses)?;
        }
        for s in shunts {
            if s.bus.0 >= n_buses {
                return Err(Error::BusOutOfRange {
                    index: s.bus.0,
                    n_buses,
                });
            }
        }

        let mut external = Vec::with_capacity(n_buses);
        external.push(slack);
        external.extend((0..n_buses).filter(|&b| b != slack.0).map(BusId));
        let mut internal = vec![None; n_buses];
        for (i, b) in external.iter().enumerate() {
            internal[b.0] = Some(i);
        }
        let idx = |b: BusId| internal[b.0].expect("validated bus index");

        // Connectivity from the slack.
        let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n_buses];
        for (k, line) in lines.iter().enumerate() {
            let (a, b) = (idx(line.from), idx(line.to));
            adj[a].push((b, k));
            adj[b].push((a, k));
        }
        let mut seen = vec![false; n_buses];
        let mut bfs_order = Vec::with_capacity(n_buses);
        let mut via: Vec<Option<(usize, usize)>> = vec![None; n_buses];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(a) = queue.pop_front() {
            bfs_order.push(a);
            for &(b, k) in &adj[a] {
                if !seen[b] {
                    seen[b] = true;
                    via[b] = Some((a, k));
                    queue.push_back(b);
                }
            }
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(Error::Disconnected(external[i].0));
        }

        let mut triplets = Vec::with_capacity(4 * lines.len() + shunts.len());
        for line in lines {
            let (a, b) = (idx(line.from), idx(line.to));
            let y = line.impedance().inv();
            let half_b = Complex64::new(0.0, 0.5 * line.shunt_susceptance);
            triplets.push((a, a, y + half_b));
            triplets.push((b, b, y + half_b));
            triplets.push((a, b, -y));
            triplets.push((b, a, -y));
        }
        for s in shunts {
            let i = idx(s.bus);
            triplets.push((i, i, Complex64::new(0.0, s.susceptance)));
        }
        let y_full = CsrMatrix::from_triplets(n_buses, &triplets);

        let n = n_buses - 1;
        let zero = Complex64::new(0.0, 0.0);
        let mut y0l = vec![zero; n];
        let mut yl0 = vec![zero; n];
        let mut yll_triplets = Vec::with_capacity(y_full.nnz());
        for i in 0..n_buses {
            for (j, v) in y_full.row(i) {
                match (i, j) {
                    (0, 0) => {}
                    (0, j) => y0l[j - 1] = v,
                    (i, 0) => yl0[i - 1] = v,
                    (i, j) => yll_triplets.push((i - 1, j - 1, v)),
                }
            }
        }
        let y00 = y_full.get(0, 0);
        let yll = CsrMatrix::from_triplets(n, &yll_triplets);
        let lu = SparseLu::factor(n, &yll_triplets)?;

        let rhs: Vec<Complex64> = yl0.iter().map(|&y| -y * slack_voltage).collect();
        let w = lu.solve(&rhs);
        let v_scale = slack_voltage.norm();
        if let Some(k) = w.iter().position(|z| !(z.norm() > 1e-12 * v_scale)) {
            return Err(Error::ZeroNoLoadVoltage(external[k + 1].0));
        }
        let w_abs = w.iter().map(|z| z.norm()).collect();

        let shunt_free = shunts.iter().all(|s| s.susceptance == 0.0)
            && lines.iter().all(|l| l.shunt_susceptance == 0.0);
        let radial = (shunt_free && lines.len() == n)
            .then(|| radial_tree(n, &bfs_order, &via, lines, v_scale));

        Ok(Self {
            n,
            slack_voltage,
            external,
            internal,
            y_full,
            y00,
            y0l,
            yl0,
            yll,
            lu,
            w,
            w_abs,
            radial,
            abs_w_star: OnceLock::new(),
        })
    }

    /// Number of PQ buses `N`.
    pub fn n_pq(&self) -> usize {
        self.n
    }

    /// Number of buses including the slack.
    pub fn n_buses(&self) -> usize {
        self.n + 1
    }

    pub fn slack_voltage(&self) -> Complex64 {
        self.slack_voltage
    }

    pub fn slack(&self) -> BusId {
        self.external[0]
    }

    /// PQ position of a caller bus index, `None` for the slack or unknown ids.
    pub fn position(&self, bus: BusId) -> Option<usize> {
        match self.internal.get(bus.0).copied().flatten() {
            Some(0) | None => None,
            Some(i) => Some(i - 1),
        }
    }

    /// Caller bus index at a PQ position.
    pub fn bus_at(&self, position: usize) -> BusId {
        self.external[position + 1]
    }

    /// Full nodal admittance matrix in internal order (slack first).
    pub fn admittance(&self) -> &CsrMatrix {
        &self.y_full
    }

    pub fn y00(&self) -> Complex64 {
        self.y00
    }

    pub fn y0l(&self) -> &[Complex64] {
        &self.y0l
    }

    pub fn yl0(&self) -> &[Complex64] {
        &self.yl0
    }

    pub fn yll(&self) -> &CsrMatrix {
        &self.yll
    }

    /// No-load voltage `w = -Y_LL^-1 Y_L0 v0`.
    pub fn no_load_voltage(&self) -> &[Complex64] {
        &self.w
    }

    pub fn w(&self) -> &[Complex64] {
        &self.w
    }

    pub fn w_abs(&self) -> &[f64] {
        &self.w_abs
    }

    pub fn radial(&self) -> Option<&RadialTree> {
        self.radial.as_ref()
    }

    /// Solves `Y_LL x = rhs` with the factorization computed at build time.
    pub fn solve_yll(&self, rhs: &[Complex64]) -> Result<Vec<Complex64>> {
        check_dim(self.n, rhs.len())?;
        Ok(self.lu.solve(rhs))
    }

    /// Currents drawn from the PQ buses into the network,
    /// `Y_L0 v0 + Y_LL v`.
    pub fn nodal_currents(&self, v: &[Complex64]) -> Result<Vec<Complex64>> {
        check_dim(self.n, v.len())?;
        let mut i = self.yll.mul_vec(v);
        for (ik, y) in i.iter_mut().zip(&self.yl0) {
            *ik += y * self.slack_voltage;
        }
        Ok(i)
    }

    /// Dense `W* = W^-1 Y_LL^-1 conj(W)^-1`. Costs `N` sparse solves and
    /// `N^2` storage.
    pub fn w_star(&self) -> DenseMatrix<Complex64> {
        let n = self.n;
        let cols: Vec<Vec<Complex64>> = (0..n)
            .into_par_iter()
            .map(|j| {
                let mut e = vec![Complex64::new(0.0, 0.0); n];
                e[j] = Complex64::new(1.0, 0.0);
                let mut col = self.lu.solve(&e);
                let wj = self.w[j].conj();
                for (i, c) in col.iter_mut().enumerate() {
                    *c /= self.w[i] * wj;
                }
                col
            })
            .collect();
        let mut out = DenseMatrix::zeros(n, n);
        for (j, col) in cols.iter().enumerate() {
            for (i, &c) in col.iter().enumerate() {
                out[(i, j)] = c;
            }
        }
        out
    }

    /// Entrywise magnitude of `W*`, materialized on first use and cached.
    pub fn abs_w_star(&self) -> &DenseMatrix<f64> {
        self.abs_w_star.get_or_init(|| {
            let ws = self.w_star();
            let data = ws.as_slice().iter().map(|z| z.norm()).collect();
            DenseMatrix::from_row_major(self.n, self.n, data)
        })
    }

    /// `||Y_LL w + Y_L0 v0||_inf / ||Y_L0 v0||_inf`.
    pub fn no_load_residual(&self) -> f64 {
        let rhs: Vec<Complex64> = self.yl0.iter().map(|&y| y * self.slack_voltage).collect();
        let mut r = self.yll.mul_vec(&self.w);
        for (rk, b) in r.iter_mut().zip(&rhs) {
            *rk += b;
        }
        norm_inf(&r) / norm_inf(&rhs)
    }
}

fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension { expected, got })
    }
}

fn validate_line(index: usize, line: &LineSpec, n_buses: usize) -> Result<()> {
    for b in [line.from, line.to] {
        if b.0 >= n_buses {
            return Err(Error::BusOutOfRange { index: b.0, n_buses });
        }
    }
    let invalid = |reason: &str| {
        Err(Error::InvalidLine {
            index,
            reason: reason.to_string(),
        })
    };
    if line.from == line.to {
        return invalid("from and to buses coincide");
    }
    if !(line.resistance.is_finite() && line.reactance.is_finite() && line.shunt_susceptance.is_finite()) {
        return invalid("non-finite parameter");
    }
    if line.resistance < 0.0 {
        return invalid("negative resistance");
    }
    if line.impedance().norm() == 0.0 {
        return invalid("zero series impedance");
    }
    Ok(())
}

fn radial_tree(
    n: usize,
    bfs_order: &[usize],
    via: &[Option<(usize, usize)>],
    lines: &[LineSpec],
    v_scale: f64,
) -> RadialTree {
    let mut parent = vec![None; n];
    let mut path = vec![Complex64::new(0.0, 0.0); n];
    let mut dz = vec![0.0; n];
    let mut has_child = vec![false; n];
    let mut topo = Vec::with_capacity(n);
    let v2 = v_scale * v_scale;
    for &b in &bfs_order[1..] {
        let (a, k) = via[b].expect("non-slack bus reached through a line");
        let pos = b - 1;
        let (z_parent, p) = if a == 0 {
            (Complex64::new(0.0, 0.0), None)
        } else {
            has_child[a - 1] = true;
            (path[a - 1], Some(a - 1))
        };
        parent[pos] = p;
        path[pos] = z_parent + lines[k].impedance();
        dz[pos] = (path[pos].norm() - z_parent.norm()) / v2;
        topo.push(pos);
    }
    let leaves = (0..n).filter(|&i| !has_child[i]).collect();
    let monotone = dz.iter().all(|&d| d >= 0.0);
    RadialTree {
        parent,
        topo,
        dz,
        leaves,
        monotone,
        path_impedance: path,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn chain5() -> NetworkModel {
        let lines: Vec<_> = (0..4).map(|k| LineSpec::new(k, k + 1, 0.07, 0.11)).collect();
        build_network(&lines, BusId(0), c(240.0, 0.0)).unwrap()
    }

    fn dense_inverse(m: &CsrMatrix) -> DMatrix<Complex64> {
        let n = m.dim();
        let d = m.to_dense();
        DMatrix::from_fn(n, n, |i, j| d[(i, j)]).try_inverse().unwrap()
    }

    #[test]
    fn two_bus_single_line() {
        let z = c(0.07, 0.11);
        let net = build_network(&[LineSpec::new(0, 1, 0.07, 0.11)], BusId(0), c(240.0, 0.0)).unwrap();
        assert_eq!(net.n_pq(), 1);
        assert!((net.yll().get(0, 0) - z.inv()).norm() < 1e-12);
        assert!((net.w()[0] - c(240.0, 0.0)).norm() < 1e-10);
    }

    #[test]
    fn chain_yll_is_tridiagonal() {
        let net = chain5();
        let y = c(0.07, 0.11).inv();
        let diag = [2.0 * y, 2.0 * y, 2.0 * y, y];
        for (i, d) in diag.iter().enumerate() {
            for j in 0..4 {
                let expect = if i == j {
                    *d
                } else if i.abs_diff(j) == 1 {
                    -y
                } else {
                    c(0.0, 0.0)
                };
                assert!((net.yll().get(i, j) - expect).norm() < 1e-12, "({i},{j})");
            }
        }
        assert!((net.yl0()[0] + y).norm() < 1e-12);
        assert!(net.yll().is_symmetric(0.0));
    }

    #[test]
    fn radial_no_load_voltage_equals_slack() {
        let net = chain5();
        for wk in net.w() {
            assert!((wk - c(240.0, 0.0)).norm() < 1e-10);
        }
        assert!(net.no_load_residual() <= 1e-10);
    }

    #[test]
    fn shunt_at_load_bus() {
        let z = c(0.2, 0.5);
        let y = z.inv();
        let b = 0.3;
        let v0 = c(100.0, 20.0);
        let net = NetworkModel::build(
            2,
            &[LineSpec::new(0, 1, z.re, z.im)],
            &[BusShunt {
                bus: BusId(1),
                susceptance: b,
            }],
            BusId(0),
            v0,
        )
        .unwrap();
        let expect = v0 * y / (y + c(0.0, b));
        assert!((net.w()[0] - expect).norm() < 1e-10 * expect.norm());
        assert!(net.radial().is_none());
    }

    #[test]
    fn w_star_chain_entries() {
        let net = chain5();
        let ws = net.w_star();
        let z = c(0.07, 0.11);
        for i in 0..4 {
            for j in 0..4 {
                let expect = z * (i.min(j) + 1) as f64 / (240.0 * 240.0);
                assert!((ws[(i, j)] - expect).norm() < 1e-15, "({i},{j})");
            }
        }
        let zinv = dense_inverse(net.yll());
        for i in 0..4 {
            for j in 0..4 {
                let oracle = zinv[(i, j)] / (240.0 * 240.0);
                assert!((ws[(i, j)] - oracle).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn w_star_two_bus_pure_reactance() {
        let net = build_network(&[LineSpec::new(0, 1, 0.0, 0.1)], BusId(0), c(1.0, 0.0)).unwrap();
        assert!((net.w_star()[(0, 0)] - c(0.0, 0.1)).norm() < 1e-14);
    }

    #[test]
    fn w_star_unwinds_to_identity() {
        let lines = [
            LineSpec::new(0, 1, 0.1, 0.2),
            LineSpec::new(1, 2, 0.05, 0.1),
            LineSpec::new(2, 3, 0.3, 0.1),
            LineSpec::new(1, 3, 0.2, 0.2),
        ];
        let shunts = [BusShunt {
            bus: BusId(2),
            susceptance: 0.05,
        }];
        let net = NetworkModel::build(4, &lines, &shunts, BusId(0), c(11.0, -2.0)).unwrap();
        let ws = net.w_star();
        let n = net.n_pq();
        let w = net.w();
        let ydense = net.yll().to_dense();
        for i in 0..n {
            for j in 0..n {
                let mut acc = c(0.0, 0.0);
                for k in 0..n {
                    acc += ydense[(i, k)] * w[k] * ws[(k, j)] * w[j].conj();
                }
                let expect = if i == j { c(1.0, 0.0) } else { c(0.0, 0.0) };
                assert!((acc - expect).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn solve_yll_matches_dense_inverse() {
        let net = chain5();
        let zinv = dense_inverse(net.yll());
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let rhs: Vec<Complex64> = (0..4).map(|_| c(rng.gen_range(-50.0..50.0), rng.gen_range(-50.0..50.0))).collect();
        let x = net.solve_yll(&rhs).unwrap();
        for i in 0..4 {
            let oracle: Complex64 = (0..4).map(|j| zinv[(i, j)] * rhs[j]).sum();
            assert!((x[i] - oracle).norm() < 1e-9);
        }
        assert_eq!(x, net.solve_yll(&rhs).unwrap());
        assert!(net.solve_yll(&[c(0.0, 0.0); 4]).unwrap().iter().all(|z| z.norm() == 0.0));
        let minus: Vec<_> = net.yl0().iter().map(|y| -y * net.slack_voltage()).collect();
        let w = net.solve_yll(&minus).unwrap();
        assert_eq!(w, net.w());
        assert!(matches!(net.solve_yll(&rhs[..3]), Err(Error::Dimension { expected: 4, got: 3 })));
    }

    #[test]
    fn row_sums_vanish_without_shunts() {
        let net = chain5();
        let ones = vec![c(1.0, 0.0); 5];
        assert!(norm_inf(&net.admittance().mul_vec(&ones)) < 1e-12);
    }

    #[test]
    fn slack_is_remapped_first() {
        let lines = [LineSpec::new(0, 1, 0.1, 0.1), LineSpec::new(1, 2, 0.1, 0.1)];
        let net = build_network(&lines, BusId(2), c(1.0, 0.0)).unwrap();
        assert_eq!(net.slack(), BusId(2));
        assert_eq!(net.position(BusId(2)), None);
        assert_eq!(net.position(BusId(0)), Some(0));
        assert_eq!(net.bus_at(1), BusId(1));
        let tree = net.radial().unwrap();
        // Bus 0 sits two segments from the slack.
        assert!((tree.path_impedance()[0] - c(0.2, 0.2)).norm() < 1e-15);
        assert_eq!(tree.leaves(), &[0]);
    }

    #[test]
    fn rejects_bad_topologies() {
        let lines = [LineSpec::new(0, 1, 0.1, 0.1), LineSpec::new(2, 3, 0.1, 0.1)];
        assert!(matches!(build_network(&lines, BusId(0), c(1.0, 0.0)), Err(Error::Disconnected(2))));
        let self_loop = [LineSpec::new(0, 1, 0.1, 0.1), LineSpec::new(1, 1, 0.1, 0.1)];
        assert!(matches!(build_network(&self_loop, BusId(0), c(1.0, 0.0)), Err(Error::InvalidLine { .. })));
        let zero = [LineSpec::new(0, 1, 0.0, 0.0)];
        assert!(matches!(build_network(&zero, BusId(0), c(1.0, 0.0)), Err(Error::InvalidLine { .. })));
        assert!(matches!(build_network(&[], BusId(0), c(1.0, 0.0)), Err(Error::EmptyNetwork)));
    }

    #[test]
    fn resonant_shunt_is_singular() {
        // Series reactance j1 and shunt admittance -j1 cancel at the load bus.
        let err = NetworkModel::build(
            2,
            &[LineSpec::new(0, 1, 0.0, 1.0)],
            &[BusShunt {
                bus: BusId(1),
                susceptance: 1.0,
            }],
            BusId(0),
            c(1.0, 0.0),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Singular { .. }), "{err}");
    }
}

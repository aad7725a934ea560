//! Dominance, nondominated sorting, crowding distance, lower convex hulls,
//! and threshold savings over two minimized objectives.

use std::cmp::Ordering;

/// `a` dominates `b`: no worse in both objectives, strictly better in one.
pub fn dominates(a: (f64, f64), b: (f64, f64)) -> bool {
    a.0 <= b.0 && a.1 <= b.1 && (a.0 < b.0 || a.1 < b.1)
}

fn lex(a: (f64, f64), b: (f64, f64)) -> Ordering {
    a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1))
}

/// Indices of the nondominated points, in ascending (x, y) order. Exact
/// duplicates of a nondominated point are all kept.
pub fn pareto_front(points: &[(f64, f64)]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&i, &j| lex(points[i], points[j]).then(i.cmp(&j)));
    let mut front: Vec<usize> = Vec::new();
    let mut best_y = f64::INFINITY;
    for i in order {
        let p = points[i];
        match front.last() {
            Some(&last) if points[last] == p => front.push(i),
            _ if p.1 < best_y => {
                best_y = p.1;
                front.push(i);
            }
            _ => {}
        }
    }
    front
}

/// Fast nondominated sort. Front 0 holds the nondominated points; each
/// front lists indices in ascending input order.
pub fn nondominated_sort(points: &[(f64, f64)]) -> Vec<Vec<usize>> {
    let n = points.len();
    let mut dominated_by = vec![0usize; n];
    let mut dominating: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        for j in i + 1..n {
            if dominates(points[i], points[j]) {
                dominating[i].push(j);
                dominated_by[j] += 1;
            } else if dominates(points[j], points[i]) {
                dominating[j].push(i);
                dominated_by[i] += 1;
            }
        }
    }
    let mut fronts = Vec::new();
    let mut current: Vec<usize> = (0..n).filter(|&i| dominated_by[i] == 0).collect();
    while !current.is_empty() {
        let mut next = Vec::new();
        for &i in &current {
            for &j in &dominating[i] {
                dominated_by[j] -= 1;
                if dominated_by[j] == 0 {
                    next.push(j);
                }
            }
        }
        next.sort_unstable();
        fronts.push(current);
        current = next;
    }
    fronts
}

/// Crowding distance of each member of one front, aligned with `front`.
/// Boundary points in either objective get infinity; interior points sum
/// the normalized gap between their neighbours.
pub fn crowding_distance(points: &[(f64, f64)], front: &[usize]) -> Vec<f64> {
    let m = front.len();
    let mut dist = vec![0.0; m];
    if m <= 2 {
        return vec![f64::INFINITY; m];
    }
    for axis in 0..2 {
        let get = |k: usize| {
            if axis == 0 {
                points[front[k]].0
            } else {
                points[front[k]].1
            }
        };
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| get(a).total_cmp(&get(b)).then(front[a].cmp(&front[b])));
        let (lo, hi) = (get(order[0]), get(order[m - 1]));
        dist[order[0]] = f64::INFINITY;
        dist[order[m - 1]] = f64::INFINITY;
        let span = hi - lo;
        if span <= 0.0 {
            continue;
        }
        for w in 1..m - 1 {
            dist[order[w]] += (get(order[w + 1]) - get(order[w - 1])) / span;
        }
    }
    dist
}

/// Lower convex hull by monotone chain, as indices in ascending x. Points
/// sharing an x keep only the lowest; collinear interior points are dropped,
/// so consecutive slopes strictly increase.
pub fn lower_convex_hull(points: &[(f64, f64)]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&i, &j| lex(points[i], points[j]).then(i.cmp(&j)));
    order.dedup_by(|b, a| points[*a].0 == points[*b].0);
    let cross = |o: (f64, f64), a: (f64, f64), b: (f64, f64)| (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0);
    let mut hull: Vec<usize> = Vec::with_capacity(order.len());
    for i in order {
        while hull.len() >= 2 {
            let (o, a) = (points[hull[hull.len() - 2]], points[hull[hull.len() - 1]]);
            if cross(o, a, points[i]) <= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(i);
    }
    hull
}

/// Height of a hull (vertices in ascending x) at `x`. Left of the first
/// vertex nothing is attainable (infinity); right of the last the curve
/// stays flat, since tolerating more error never costs energy.
pub fn hull_value_at(hull: &[(f64, f64)], x: f64) -> f64 {
    let Some(first) = hull.first() else {
        return f64::INFINITY;
    };
    if x < first.0 {
        return f64::INFINITY;
    }
    for w in hull.windows(2) {
        let (a, b) = (w[0], w[1]);
        if x <= b.0 {
            if x == b.0 {
                return b.1;
            }
            let t = (x - a.0) / (b.0 - a.0);
            return a.1 + t * (b.1 - a.1);
        }
    }
    hull[hull.len() - 1].1
}

/// Area dominated by `points` inside the box bounded by `reference`.
pub fn hypervolume(points: &[(f64, f64)], reference: (f64, f64)) -> f64 {
    let mut inside: Vec<(f64, f64)> =
        points.iter().copied().filter(|p| p.0 < reference.0 && p.1 < reference.1).collect();
    inside.sort_by(|a, b| lex(*a, *b));
    let mut area = 0.0;
    let mut ceiling = reference.1;
    for p in inside {
        if p.1 < ceiling {
            area += (reference.0 - p.0) * (ceiling - p.1);
            ceiling = p.1;
        }
    }
    area
}

/// Best savings reachable within one error threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Savings {
    pub threshold_pct: f64,
    pub fpu_saving_pct: f64,
    pub mem_saving_pct: f64,
}

pub const DEFAULT_THRESHOLDS: [f64; 3] = [1.0, 5.0, 10.0];

/// `points` are `(error_pct, fpu_norm, mem_norm)`. For each threshold the
/// saving is `100 - min(norm)` over points with `error_pct <= threshold`,
/// or 0 when none qualifies.
pub fn quantize_frontier(points: &[(f64, f64, f64)], thresholds: &[f64]) -> Vec<Savings> {
    thresholds
        .iter()
        .map(|&t| {
            let feasible = points.iter().filter(|p| p.0 <= t);
            let (fpu, mem) = feasible.fold((f64::INFINITY, f64::INFINITY), |(f, m), p| (f.min(p.1), m.min(p.2)));
            let saving = |v: f64| if v.is_finite() { 100.0 - v } else { 0.0 };
            Savings { threshold_pct: t, fpu_saving_pct: saving(fpu), mem_saving_pct: saving(mem) }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_front(points: &[(f64, f64)]) -> Vec<usize> {
        (0..points.len()).filter(|&i| !points.iter().any(|&q| dominates(q, points[i]))).collect()
    }

    /// Hull oracle: a point is a vertex iff no segment between two other
    /// points passes on or below it, and it is the lowest point at its x.
    fn brute_hull(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
        let mut out: Vec<(f64, f64)> = Vec::new();
        for (i, &p) in points.iter().enumerate() {
            if points.iter().any(|&q| q.0 == p.0 && q.1 < p.1) {
                continue;
            }
            let mut covered = false;
            for (a_i, &a) in points.iter().enumerate() {
                for (b_i, &b) in points.iter().enumerate() {
                    if a_i == i || b_i == i || !(a.0 < p.0 && p.0 < b.0) {
                        continue;
                    }
                    let y = a.1 + (p.0 - a.0) / (b.0 - a.0) * (b.1 - a.1);
                    if y <= p.1 {
                        covered = true;
                    }
                }
            }
            if !covered && !out.contains(&p) {
                out.push(p);
            }
        }
        out.sort_by(|a, b| lex(*a, *b));
        out
    }

    #[test]
    fn sort_examples() {
        assert_eq!(nondominated_sort(&[(3.0, 3.0)]), vec![vec![0]]);
        assert_eq!(crowding_distance(&[(3.0, 3.0)], &[0]), vec![f64::INFINITY]);
        let pts = [(1.0, 9.0), (9.0, 1.0), (5.0, 5.0)];
        assert_eq!(nondominated_sort(&pts), vec![vec![0, 1, 2]]);
        let d = crowding_distance(&pts, &[0, 1, 2]);
        assert!(d[0].is_infinite() && d[1].is_infinite());
        assert!((d[2] - 2.0).abs() < 1e-12);
        assert_eq!(nondominated_sort(&[(1.0, 1.0), (2.0, 2.0)]), vec![vec![0], vec![1]]);
    }

    #[test]
    fn hull_examples() {
        let pts = [(0.0, 100.0), (10.0, 20.0), (5.0, 70.0)];
        assert_eq!(lower_convex_hull(&pts), vec![0, 1]);
        assert_eq!(hull_value_at(&[pts[0], pts[1]], 5.0), 60.0);
        let collinear = [(0.0, 100.0), (5.0, 60.0), (10.0, 20.0)];
        assert_eq!(lower_convex_hull(&collinear), vec![0, 2]);
        assert_eq!(lower_convex_hull(&[(2.0, 3.0)]), vec![0]);
    }

    #[test]
    fn hull_value_outside_the_range() {
        let hull = [(1.0, 50.0), (4.0, 20.0)];
        assert_eq!(hull_value_at(&hull, 0.5), f64::INFINITY);
        assert_eq!(hull_value_at(&hull, 9.0), 20.0);
        assert_eq!(hull_value_at(&hull, 2.5), 35.0);
    }

    #[test]
    fn savings_examples() {
        let frontier = [(0.5, 80.0, 90.0), (4.0, 60.0, 70.0), (9.0, 50.0, 65.0)];
        let s = quantize_frontier(&frontier, &DEFAULT_THRESHOLDS);
        let fpu: Vec<f64> = s.iter().map(|s| s.fpu_saving_pct).collect();
        assert_eq!(fpu, vec![20.0, 40.0, 50.0]);
        assert_eq!(s[2].mem_saving_pct, 35.0);
        let none = quantize_frontier(&[(20.0, 10.0, 10.0)], &[1.0]);
        assert_eq!(none[0].fpu_saving_pct, 0.0);
    }

    #[test]
    fn hypervolume_of_a_staircase() {
        let hv = hypervolume(&[(1.0, 3.0), (2.0, 1.0), (3.0, 2.0)], (4.0, 4.0));
        // (4-1)*(4-3) + (4-2)*(3-1)
        assert_eq!(hv, 7.0);
        assert_eq!(hypervolume(&[(5.0, 5.0)], (4.0, 4.0)), 0.0);
    }

    fn point_sets() -> impl Strategy<Value = Vec<(f64, f64)>> {
        // a coarse grid forces ties and collinear runs
        prop::collection::vec((0u8..12, 0u8..12).prop_map(|(x, y)| (x as f64, y as f64 * 2.5)), 1..40)
    }

    proptest! {
        #[test]
        fn front_matches_brute_force(points in point_sets()) {
            let mut fast = pareto_front(&points);
            fast.sort_unstable();
            prop_assert_eq!(&fast, &brute_front(&points));
            prop_assert_eq!(&nondominated_sort(&points)[0], &fast);
        }

        #[test]
        fn fronts_partition_and_respect_dominance(points in point_sets()) {
            let fronts = nondominated_sort(&points);
            let mut all: Vec<usize> = fronts.concat();
            all.sort_unstable();
            prop_assert_eq!(all, (0..points.len()).collect::<Vec<_>>());
            for (r, front) in fronts.iter().enumerate() {
                for &i in front {
                    for same in front {
                        prop_assert!(!dominates(points[*same], points[i]));
                    }
                    if r > 0 {
                        prop_assert!(fronts[r - 1].iter().any(|&j| dominates(points[j], points[i])));
                    }
                }
            }
        }

        #[test]
        fn hull_matches_oracle_and_bounds_every_point(points in point_sets()) {
            let hull: Vec<(f64, f64)> = lower_convex_hull(&points).into_iter().map(|i| points[i]).collect();
            prop_assert_eq!(&hull, &brute_hull(&points));
            for w in hull.windows(3) {
                let s1 = (w[1].1 - w[0].1) / (w[1].0 - w[0].0);
                let s2 = (w[2].1 - w[1].1) / (w[2].0 - w[1].0);
                prop_assert!(s1 < s2);
            }
            for p in &points {
                prop_assert!(hull_value_at(&hull, p.0) <= p.1 + 1e-9);
            }
        }

        #[test]
        fn crowding_boundaries_are_infinite(points in point_sets()) {
            let front = &nondominated_sort(&points)[0];
            let d = crowding_distance(&points, front);
            prop_assert_eq!(d.len(), front.len());
            prop_assert!(d.iter().all(|&v| v >= 0.0));
            prop_assert!(d.iter().filter(|v| v.is_infinite()).count() >= front.len().min(2));
        }
    }
}

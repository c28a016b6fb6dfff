use std::collections::VecDeque;

use super::{Dag, GraphError, NodeSet};

fn validate_query(
    g: &Dag,
    a: &NodeSet,
    b: &NodeSet,
    c: &NodeSet,
) -> Result<(Vec<usize>, Vec<usize>, Vec<usize>), GraphError> {
    if a.is_empty() || b.is_empty() {
        return Err(GraphError::InvalidQuery(
            "query sets A and B must be nonempty".into(),
        ));
    }
    if !a.is_disjoint(b) || !a.is_disjoint(c) || !b.is_disjoint(c) {
        return Err(GraphError::InvalidQuery(
            "query sets A, B, C must be pairwise disjoint".into(),
        ));
    }
    Ok((g.resolve(a)?, g.resolve(b)?, g.resolve(c)?))
}

/// Returns true iff every path between `a` and `b` is blocked given `c`.
///
/// Reachability over (node, direction) states: a ball arriving from a child
/// may continue anywhere unless the node is observed; a ball arriving from a
/// parent continues to children when unobserved and bounces back to parents
/// only when the node is an observed collider or has an observed descendant.
pub fn is_d_separated(g: &Dag, a: &NodeSet, b: &NodeSet, c: &NodeSet) -> Result<bool, GraphError> {
    let (a, b, c) = validate_query(g, a, b, c)?;
    let observed = g.indicator(&c);
    let reach = reachable(g, &a, &observed);
    Ok(b.iter().all(|&v| !reach[v]))
}

/// Nodes reachable from `sources` by an active trail given `observed`.
pub(crate) fn reachable(g: &Dag, sources: &[usize], observed: &[bool]) -> Vec<bool> {
    // collider at v is open iff v or one of its descendants is observed
    let open_collider = g.ancestral_closure(observed);
    const UP: usize = 0; // arrived from a child (or starting)
    const DOWN: usize = 1; // arrived from a parent
    let mut visited = vec![[false; 2]; g.len()];
    let mut reach = vec![false; g.len()];
    let mut queue: VecDeque<(usize, usize)> = sources.iter().map(|&s| (s, UP)).collect();

    while let Some((v, dir)) = queue.pop_front() {
        if visited[v][dir] {
            continue;
        }
        visited[v][dir] = true;
        if !observed[v] {
            reach[v] = true;
        }
        if dir == UP && !observed[v] {
            queue.extend(g.parents_of(v).iter().map(|&p| (p, UP)));
            queue.extend(g.children_of(v).iter().map(|&ch| (ch, DOWN)));
        } else if dir == DOWN {
            if !observed[v] {
                queue.extend(g.children_of(v).iter().map(|&ch| (ch, DOWN)));
            }
            if open_collider[v] {
                queue.extend(g.parents_of(v).iter().map(|&p| (p, UP)));
            }
        }
    }
    reach
}

/// Applies the blocking rules to one simple path (given as node indices).
///
/// An interior node blocks when it is a chain or fork node in `observed`, or
/// a collider with neither itself nor any descendant in `observed`.
pub fn path_is_blocked(g: &Dag, path: &[usize], observed: &[bool]) -> bool {
    path.windows(3).any(|w| {
        let (prev, o, next) = (w[0], w[1], w[2]);
        let collider = g.has_edge(prev, o) && g.has_edge(next, o);
        if collider {
            let desc = g.descendants_of(o);
            !observed[o] && !(0..g.len()).any(|d| desc[d] && observed[d])
        } else {
            observed[o]
        }
    })
}

/// Searches for an unblocked simple path from `a` to `b` given `c` by
/// enumerating undirected simple paths. Exponential; intended for small
/// graphs and human-readable witnesses.
pub fn find_active_path(
    g: &Dag,
    a: &NodeSet,
    b: &NodeSet,
    c: &NodeSet,
) -> Result<Option<Vec<String>>, GraphError> {
    let (a, b, c) = validate_query(g, a, b, c)?;
    let observed = g.indicator(&c);
    let targets = g.indicator(&b);
    let neighbours: Vec<Vec<usize>> = (0..g.len())
        .map(|v| {
            let mut n: Vec<usize> = g
                .parents_of(v)
                .iter()
                .chain(g.children_of(v))
                .copied()
                .collect();
            n.sort_unstable();
            n
        })
        .collect();

    fn dfs(
        g: &Dag,
        neighbours: &[Vec<usize>],
        observed: &[bool],
        targets: &[bool],
        path: &mut Vec<usize>,
        on_path: &mut [bool],
    ) -> bool {
        let v = *path.last().expect("path is never empty");
        if path.len() > 1 && targets[v] {
            return true;
        }
        for &n in &neighbours[v] {
            if on_path[n] {
                continue;
            }
            path.push(n);
            on_path[n] = true;
            // prune as soon as the newest interior node blocks
            let blocked = path.len() >= 3 && path_is_blocked(g, &path[path.len() - 3..], observed);
            if !blocked && dfs(g, neighbours, observed, targets, path, on_path) {
                return true;
            }
            on_path[n] = false;
            path.pop();
        }
        false
    }

    for &s in &a {
        let mut path = vec![s];
        let mut on_path = vec![false; g.len()];
        on_path[s] = true;
        if dfs(g, &neighbours, &observed, &targets, &mut path, &mut on_path) {
            return Ok(Some(path.iter().map(|&i| g.name(i).to_string()).collect()));
        }
    }
    Ok(None)
}

/// Renders a path with arrow directions, e.g. `X_T <- U -> X_S -> Y_S`.
pub fn render_path(g: &Dag, path: &[String]) -> String {
    let mut out = String::new();
    for (i, n) in path.iter().enumerate() {
        if i > 0 {
            let p = g.index_of(&path[i - 1]).unwrap_or(0);
            let q = g.index_of(n).unwrap_or(0);
            out.push_str(if g.has_edge(p, q) { " -> " } else { " <- " });
        }
        out.push_str(n);
    }
    out
}

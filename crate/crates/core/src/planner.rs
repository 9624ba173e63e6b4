//! Free-flow route planning: A* over a visibility graph of inflated obstacle
//! corners.

use alloc::collections::BinaryHeap;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::error::{Error, Result};
use crate::geom::Vec2;
use crate::scene::Scene;

/// Obstacle-corner graph. Edge weights are Euclidean lengths in meters.
#[derive(Debug, Clone, PartialEq)]
pub struct VisibilityGraph {
    pub nodes: Vec<Vec2>,
    pub adjacency: Vec<Vec<(usize, f64)>>,
}

impl VisibilityGraph {
    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.adjacency[a].iter().any(|&(n, _)| n == b)
    }
}

/// Builds the visibility graph of `scene` with corners pushed outward by
/// `clearance`. Corners that land inside an obstacle or outside the bounds are
/// dropped.
pub fn build_visibility_graph(scene: &Scene, clearance: f64) -> Result<VisibilityGraph> {
    if !(clearance >= 0.0 && clearance.is_finite()) {
        return Err(Error::InvalidArgument(alloc::format!("clearance must be >= 0, got {clearance}")));
    }
    let nodes: Vec<Vec2> = scene
        .obstacles
        .iter()
        .flat_map(|o| o.inflated(clearance))
        .filter(|&p| scene.bounds.contains(p) && !scene.inside_obstacle(p))
        .collect();
    let mut adjacency = alloc::vec![Vec::new(); nodes.len()];
    for i in 0..nodes.len() {
        for j in (i + 1)..nodes.len() {
            if nodes[i] != nodes[j] && scene.segment_is_free(nodes[i], nodes[j]) {
                let w = nodes[i].distance(nodes[j]);
                adjacency[i].push((j, w));
                adjacency[j].push((i, w));
            }
        }
    }
    Ok(VisibilityGraph { nodes, adjacency })
}

/// The graph with `start` and `goal` appended as the last two nodes.
pub fn augment(graph: &VisibilityGraph, start: Vec2, goal: Vec2, scene: &Scene) -> VisibilityGraph {
    let mut g = graph.clone();
    let s = g.nodes.len();
    g.nodes.push(start);
    g.nodes.push(goal);
    g.adjacency.push(Vec::new());
    g.adjacency.push(Vec::new());
    for new in [s, s + 1] {
        for other in 0..new {
            let (a, b) = (g.nodes[new], g.nodes[other]);
            if scene.segment_is_free(a, b) {
                let w = a.distance(b);
                g.adjacency[new].push((other, w));
                g.adjacency[other].push((new, w));
            }
        }
    }
    g
}

#[derive(PartialEq)]
struct Open {
    f: f64,
    node: usize,
}

impl Eq for Open {}

impl Ord for Open {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on f, ties by node index
        other.f.total_cmp(&self.f).then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Open {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// A* from node `from` to node `to` with the straight-line heuristic.
/// Returns the node sequence.
pub fn astar(graph: &VisibilityGraph, from: usize, to: usize) -> Option<Vec<usize>> {
    let n = graph.nodes.len();
    let goal = graph.nodes[to];
    let mut g = alloc::vec![f64::INFINITY; n];
    let mut parent = alloc::vec![usize::MAX; n];
    let mut closed = alloc::vec![false; n];
    let mut open = BinaryHeap::new();
    g[from] = 0.0;
    open.push(Open { f: graph.nodes[from].distance(goal), node: from });
    while let Some(Open { node, .. }) = open.pop() {
        if closed[node] {
            continue;
        }
        if node == to {
            let mut path = alloc::vec![to];
            let mut cur = to;
            while cur != from {
                cur = parent[cur];
                path.push(cur);
            }
            path.reverse();
            return Some(path);
        }
        closed[node] = true;
        for &(next, w) in &graph.adjacency[node] {
            let cand = g[node] + w;
            if cand < g[next] {
                g[next] = cand;
                parent[next] = node;
                open.push(Open { f: cand + graph.nodes[next].distance(goal), node: next });
            }
        }
    }
    None
}

/// Plans a waypoint list from `start` to `goal`, both included.
pub fn plan_path(graph: &VisibilityGraph, start: Vec2, goal: Vec2, scene: &Scene) -> Result<Vec<Vec2>> {
    if !scene.bounds.contains(start) || !scene.bounds.contains(goal) {
        return Err(Error::InvalidArgument("start and goal must lie inside the scene bounds".into()));
    }
    if scene.inside_obstacle(start) || scene.inside_obstacle(goal) {
        return Err(Error::UnreachableGoal(None));
    }
    if scene.segment_is_free(start, goal) {
        return Ok(alloc::vec![start, goal]);
    }
    let g = augment(graph, start, goal, scene);
    let s = graph.nodes.len();
    let nodes = astar(&g, s, s + 1).ok_or(Error::UnreachableGoal(None))?;
    Ok(nodes.into_iter().map(|i| g.nodes[i]).collect())
}

pub fn path_length(path: &[Vec2]) -> f64 {
    path.windows(2).map(|w| w[0].distance(w[1])).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{Polygon, Rect};

    fn bounds() -> Rect {
        Rect::new(Vec2::new(-50.0, -50.0), Vec2::new(50.0, 50.0))
    }

    fn scene_with(obstacles: Vec<Polygon>) -> Scene {
        Scene::new(obstacles, Vec::new(), Vec::new(), bounds(), 1.0).unwrap()
    }

    #[test]
    fn empty_scene() {
        let s = Scene::empty(bounds());
        let g = build_visibility_graph(&s, 0.3).unwrap();
        assert_eq!(g.nodes.len(), 0);
        let p = plan_path(&g, Vec2::ZERO, Vec2::new(10.0, 0.0), &s).unwrap();
        assert_eq!(p, alloc::vec![Vec2::ZERO, Vec2::new(10.0, 0.0)]);
    }

    #[test]
    fn square_has_perimeter_edges_only() {
        let s = scene_with(alloc::vec![Polygon::rect(Vec2::new(0.0, 0.0), Vec2::new(2.0, 2.0))]);
        let g = build_visibility_graph(&s, 0.0).unwrap();
        assert_eq!(g.nodes.len(), 4);
        assert_eq!(g.edge_count(), 4);
        assert!(!g.has_edge(0, 2));
        assert!(!g.has_edge(1, 3));
    }

    #[test]
    fn negative_clearance_rejected() {
        let s = Scene::empty(bounds());
        assert!(matches!(build_visibility_graph(&s, -0.1), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn detour_around_block() {
        let s = scene_with(alloc::vec![Polygon::rect(Vec2::new(4.0, -1.0), Vec2::new(6.0, 1.0))]);
        let g = build_visibility_graph(&s, 0.3).unwrap();
        let p = plan_path(&g, Vec2::ZERO, Vec2::new(10.0, 0.0), &s).unwrap();
        assert!(path_length(&p) > 10.0);
        assert_eq!(p.len(), 4);
        for w in p.windows(2) {
            assert!(s.segment_is_free(w[0], w[1]));
        }
    }

    #[test]
    fn enclosed_goal_is_unreachable() {
        let walls = alloc::vec![
            Polygon::rect(Vec2::new(-5.0, -5.0), Vec2::new(5.0, -4.0)),
            Polygon::rect(Vec2::new(-5.0, 4.0), Vec2::new(5.0, 5.0)),
            Polygon::rect(Vec2::new(-5.0, -4.0), Vec2::new(-4.0, 4.0)),
            Polygon::rect(Vec2::new(4.0, -4.0), Vec2::new(5.0, 4.0)),
        ];
        let s = scene_with(walls);
        let g = build_visibility_graph(&s, 0.3).unwrap();
        let r = plan_path(&g, Vec2::new(-20.0, 0.0), Vec2::ZERO, &s);
        assert_eq!(r, Err(Error::UnreachableGoal(None)));
    }
}

//! Topological graph over the robot, the goal sets and the obstacle groups.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::costmap::ObstacleGroup;
use crate::geometry::{polygon_closest_points, Polygon, Pose, Vec2};
use crate::trajopt::GoalConstraint;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeKind {
    Robot,
    /// Index into the goal list.
    Goal(usize),
    /// Index into the group list.
    Group(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphNode {
    pub kind: NodeKind,
    /// Robot position, goal anchor, or group centroid.
    pub anchor: Vec2,
}

/// Shortest collision-free connection between two nodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphEdge {
    pub a: usize,
    pub b: usize,
    /// Endpoint on node `a`.
    pub from: Vec2,
    /// Endpoint on node `b`.
    pub to: Vec2,
}

impl GraphEdge {
    pub fn length(&self) -> f64 {
        self.from.distance(self.to)
    }

    /// Endpoint lying on `node`.
    pub fn endpoint_on(&self, node: usize) -> Vec2 {
        if node == self.a {
            self.from
        } else {
            self.to
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TopoGraph {
    pub nodes: Vec<GraphNode>,
    pub edges: Vec<GraphEdge>,
    /// Edge ids incident to each node.
    pub adjacency: Vec<Vec<usize>>,
}

impl TopoGraph {
    pub const ROBOT: usize = 0;

    pub fn edge_between(&self, a: usize, b: usize) -> Option<&GraphEdge> {
        self.adjacency[a]
            .iter()
            .map(|&e| &self.edges[e])
            .find(|e| (e.a == a && e.b == b) || (e.a == b && e.b == a))
    }

    pub fn neighbors(&self, node: usize) -> impl Iterator<Item = usize> + '_ {
        self.adjacency[node].iter().map(move |&e| {
            let edge = &self.edges[e];
            if edge.a == node {
                edge.b
            } else {
                edge.a
            }
        })
    }

    fn add_edge(&mut self, a: usize, b: usize, from: Vec2, to: Vec2) {
        let id = self.edges.len();
        self.edges.push(GraphEdge { a, b, from, to });
        self.adjacency[a].push(id);
        self.adjacency[b].push(id);
    }
}

fn strictly_inside(hull: &Polygon, p: Vec2) -> bool {
    hull.signed_distance(p) < -1e-9
}

/// True if the segment crosses the interior of a hull that contains neither endpoint.
pub fn segment_blocked(groups: &[ObstacleGroup], a: Vec2, b: Vec2) -> bool {
    groups.iter().any(|g| {
        !strictly_inside(&g.boundary, a) && !strictly_inside(&g.boundary, b) && g.boundary.segment_crosses_interior(a, b)
    })
}

/// Builds the graph: node 0 is the robot, then one node per goal set, then one per
/// group that contains neither the robot nor a goal anchor.
pub fn build_graph(groups: &[ObstacleGroup], robot: &Pose, goals: &[GoalConstraint]) -> TopoGraph {
    let r = robot.position();
    let mut graph = TopoGraph::default();
    graph.nodes.push(GraphNode {
        kind: NodeKind::Robot,
        anchor: r,
    });
    let anchors: Vec<Vec2> = goals.iter().map(|g| g.nearest_point(r)).collect();
    for (i, &a) in anchors.iter().enumerate() {
        graph.nodes.push(GraphNode {
            kind: NodeKind::Goal(i),
            anchor: a,
        });
    }
    for (i, g) in groups.iter().enumerate() {
        if strictly_inside(&g.boundary, r) || anchors.iter().any(|&a| strictly_inside(&g.boundary, a)) {
            continue;
        }
        graph.nodes.push(GraphNode {
            kind: NodeKind::Group(i),
            anchor: g.centroid,
        });
    }
    graph.adjacency = vec![Vec::new(); graph.nodes.len()];

    let n = graph.nodes.len();
    for i in 0..n {
        for j in (i + 1)..n {
            let (from, to) = match (graph.nodes[i].kind, graph.nodes[j].kind) {
                (NodeKind::Goal(_), NodeKind::Goal(_)) => continue,
                (NodeKind::Robot, NodeKind::Goal(_)) => (r, graph.nodes[j].anchor),
                (NodeKind::Robot, NodeKind::Group(k)) => (r, groups[k].boundary.closest_boundary_point(r)),
                (NodeKind::Goal(_), NodeKind::Group(k)) => {
                    let a = graph.nodes[i].anchor;
                    (a, groups[k].boundary.closest_boundary_point(a))
                }
                (NodeKind::Group(k), NodeKind::Group(l)) => {
                    polygon_closest_points(&groups[k].boundary, &groups[l].boundary)
                }
                _ => unreachable!("robot is node 0 and nodes are ordered robot, goals, groups"),
            };
            if !segment_blocked(groups, from, to) {
                graph.add_edge(i, j, from, to);
            }
        }
    }
    graph
}

/// Node path from the robot through obstacle nodes to a goal node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneralizedTrajectory {
    pub nodes: Vec<usize>,
    /// Sum of edge lengths along the path.
    pub graph_length: f64,
}

impl GeneralizedTrajectory {
    pub fn obstacle_nodes(&self) -> &[usize] {
        &self.nodes[1..self.nodes.len() - 1]
    }

    pub fn goal_node(&self) -> usize {
        *self.nodes.last().expect("path has a goal node")
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("no goal node is reachable from the robot")]
    NoPath,
}

/// All simple robot→goal paths with at most `depth_limit` intermediate obstacle nodes.
pub fn enumerate_generalized(graph: &TopoGraph, depth_limit: usize) -> Result<Vec<GeneralizedTrajectory>, GraphError> {
    debug_assert!(depth_limit >= 1);
    let mut out = Vec::new();
    let mut visited = vec![false; graph.nodes.len()];
    let mut path = vec![TopoGraph::ROBOT];
    visited[TopoGraph::ROBOT] = true;
    dfs(graph, depth_limit, &mut path, &mut visited, 0.0, &mut out);
    if out.is_empty() {
        Err(GraphError::NoPath)
    } else {
        Ok(out)
    }
}

fn dfs(
    graph: &TopoGraph,
    depth_limit: usize,
    path: &mut Vec<usize>,
    visited: &mut [bool],
    length: f64,
    out: &mut Vec<GeneralizedTrajectory>,
) {
    let here = *path.last().unwrap();
    for &e in &graph.adjacency[here] {
        let edge = &graph.edges[e];
        let next = if edge.a == here { edge.b } else { edge.a };
        if visited[next] {
            continue;
        }
        let len = length + edge.length();
        match graph.nodes[next].kind {
            NodeKind::Goal(_) => {
                let mut nodes = path.clone();
                nodes.push(next);
                out.push(GeneralizedTrajectory {
                    nodes,
                    graph_length: len,
                });
            }
            NodeKind::Group(_) if path.len() - 1 < depth_limit => {
                visited[next] = true;
                path.push(next);
                dfs(graph, depth_limit, path, visited, len, out);
                path.pop();
                visited[next] = false;
            }
            _ => {}
        }
    }
}

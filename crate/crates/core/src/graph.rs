//! Product region graph of a CTMC and a DTA.
//!
//! Vertices are `(state, location, region)` triples over every region of the
//! automaton's ceilings. An edge `(s, q, r) → (u, q′, r′)` exists when
//! `P(s, u) > 0` and some positive delay from a valuation in `r` lands in a
//! non-marginal region from which `κ` reaches `(q′, η′)` with `η′ ∈ r′`.
//! Since guards are region-invariant, one representative per region and one
//! delay per interval of the `ℛ_η` cluster are enough to find every edge.

use std::collections::{HashMap, VecDeque};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::dynamics::{kappa, Configuration};
use crate::models::{Model, ModelConstants};
use crate::rational::{format_rational, to_f64, Rational};
use crate::region::{
    delay_representatives, enumerate_regions, region_of, ClockValuation, RegionCode,
};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ProductVertex {
    pub state: usize,
    pub location: usize,
    pub region: RegionCode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VertexClass {
    Final,
    Alive,
    Dead,
}

/// An edge with the concrete `(η, t)` that produces it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Edge {
    pub target: usize,
    pub witness_valuation: ClockValuation,
    pub witness_delay: Rational,
}

#[derive(Debug, Clone)]
pub struct ProductGraph {
    pub vertices: Vec<ProductVertex>,
    /// One valuation inside each vertex's region.
    pub representatives: Vec<ClockValuation>,
    pub edges: Vec<Vec<Edge>>,
    pub classes: Vec<VertexClass>,
    index: HashMap<ProductVertex, usize>,
}

impl ProductGraph {
    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.iter().map(Vec::len).sum()
    }

    pub fn index_of(&self, v: &ProductVertex) -> Option<usize> {
        self.index.get(v).copied()
    }

    /// Vertex of `(s, q, [η]~)`.
    pub fn vertex_of(&self, model: &Model, s: usize, q: usize, eta: &ClockValuation) -> usize {
        let v = ProductVertex {
            state: s,
            location: q,
            region: region_of(eta, model.ceilings()),
        };
        self.index[&v]
    }

    pub fn class_of(&self, model: &Model, s: usize, q: usize, eta: &ClockValuation) -> VertexClass {
        self.classes[self.vertex_of(model, s, q, eta)]
    }

    pub fn count_class(&self, class: VertexClass) -> usize {
        self.classes.iter().filter(|c| **c == class).count()
    }

    /// Graphviz rendering with vertex classes as colours.
    pub fn to_dot(&self, model: &Model) -> String {
        let mut out = String::from(
            "digraph product {\n  rankdir=LR;\n  node [shape=box, fontname=\"monospace\"];\n",
        );
        for i in 0..self.vertices.len() {
            let color = match self.classes[i] {
                VertexClass::Final => "palegreen",
                VertexClass::Alive => "lightblue",
                VertexClass::Dead => "lightgray",
            };
            let _ = writeln!(
                out,
                "  v{i} [label=\"{}\", style=filled, fillcolor={color}];",
                escape(&self.vertex_label(model, i))
            );
        }
        for (i, es) in self.edges.iter().enumerate() {
            for e in es {
                let _ = writeln!(
                    out,
                    "  v{i} -> v{} [label=\"t={}\"];",
                    e.target,
                    format_rational(&e.witness_delay)
                );
            }
        }
        out.push_str("}\n");
        out
    }

    pub fn vertex_label(&self, model: &Model, i: usize) -> String {
        let v = &self.vertices[i];
        format!(
            "{},{},{}",
            model.ctmc.states[v.state],
            model.dta.locations[v.location],
            region_label(&v.region, &model.dta.clocks)
        )
    }
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

/// Region rendered with clock names, e.g. `x∈(0,1),y=1,frac:x<y`.
pub fn region_label(region: &RegionCode, clocks: &[String]) -> String {
    use crate::region::ClockRegion;
    let mut parts: Vec<String> = region
        .clocks
        .iter()
        .zip(clocks)
        .map(|(c, name)| match c {
            ClockRegion::Above => format!("{name}>T"),
            ClockRegion::Within {
                int,
                zero_frac: true,
            } => format!("{name}={int}"),
            ClockRegion::Within {
                int,
                zero_frac: false,
            } => format!("{name}∈({int},{})", int + 1),
        })
        .collect();
    if region.frac_order.len() > 1 || region.frac_order.iter().any(|b| b.len() > 1) {
        let blocks: Vec<String> = region
            .frac_order
            .iter()
            .map(|b| {
                b.iter()
                    .map(|&x| clocks[x].as_str())
                    .collect::<Vec<_>>()
                    .join("=")
            })
            .collect();
        parts.push(format!("frac:{}", blocks.join("<")));
    }
    parts.join(",")
}

/// Builds and classifies the product region graph.
pub fn build_graph(model: &Model) -> ProductGraph {
    let ceilings = model.ceilings();
    let regions = enumerate_regions(ceilings);
    let (n_s, n_q) = (model.ctmc.state_count(), model.dta.locations.len());

    let mut vertices = Vec::with_capacity(n_s * n_q * regions.len());
    let mut representatives = Vec::with_capacity(vertices.capacity());
    for s in 0..n_s {
        for q in 0..n_q {
            for (code, eta) in &regions {
                vertices.push(ProductVertex {
                    state: s,
                    location: q,
                    region: code.clone(),
                });
                representatives.push(eta.clone());
            }
        }
    }
    let index: HashMap<ProductVertex, usize> = vertices
        .iter()
        .cloned()
        .enumerate()
        .map(|(i, v)| (v, i))
        .collect();

    let mut edges: Vec<Vec<Edge>> = Vec::with_capacity(vertices.len());
    for (v, eta) in vertices.iter().zip(&representatives) {
        let mut out: Vec<Edge> = Vec::new();
        let signature = model.signature_of_state(v.state);
        let start = Configuration::new(v.location, eta.clone());
        for t in delay_representatives(eta, ceilings) {
            debug_assert!(!region_of(&eta.delay(&t), ceilings).is_marginal());
            let next = kappa(&model.dta, &start, signature, &t)
                .expect("validated DTA is deterministic and total");
            let region = region_of(&next.valuation, ceilings);
            for (u, _) in model.ctmc.successors(v.state) {
                let target = index[&ProductVertex {
                    state: u,
                    location: next.location,
                    region: region.clone(),
                }];
                if !out.iter().any(|e| e.target == target) {
                    out.push(Edge {
                        target,
                        witness_valuation: eta.clone(),
                        witness_delay: t,
                    });
                }
            }
        }
        edges.push(out);
    }

    let classes = classify_vertices(model, &vertices, &edges);
    ProductGraph {
        vertices,
        representatives,
        edges,
        classes,
        index,
    }
}

/// Backward reachability from the final vertices.
pub fn classify(model: &Model, graph: &ProductGraph) -> Vec<VertexClass> {
    classify_vertices(model, &graph.vertices, &graph.edges)
}

fn classify_vertices(
    model: &Model,
    vertices: &[ProductVertex],
    edges: &[Vec<Edge>],
) -> Vec<VertexClass> {
    let n = vertices.len();
    let mut reverse: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, es) in edges.iter().enumerate() {
        for e in es {
            reverse[e.target].push(i);
        }
    }
    let mut classes = vec![VertexClass::Dead; n];
    let mut queue = VecDeque::new();
    for (i, v) in vertices.iter().enumerate() {
        if model.dta.is_final(v.location) {
            classes[i] = VertexClass::Final;
            queue.push_back(i);
        }
    }
    while let Some(i) = queue.pop_front() {
        for &p in &reverse[i] {
            if classes[p] == VertexClass::Dead {
                classes[p] = VertexClass::Alive;
                queue.push_back(p);
            }
        }
    }
    classes
}

/// `𝔠 = e^{−λmax·Tmax} · p_min · λmin / (2|V|² + λmin)` and the grid threshold `2|V|² + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContractionConstant {
    pub value: f64,
    /// Natural logarithm of `value`, finite even when `value` underflows.
    pub ln_value: f64,
    pub m_min: u64,
}

pub fn contraction_constant(graph: &ProductGraph, k: &ModelConstants) -> ContractionConstant {
    let v = graph.vertex_count() as f64;
    let lambda_max = to_f64(&k.lambda_max);
    let lambda_min = to_f64(&k.lambda_min);
    let p_min = to_f64(&k.p_min);
    let t_max = k.t_max as f64;
    let ln_value =
        -lambda_max * t_max + p_min.ln() + lambda_min.ln() - (2.0 * v * v + lambda_min).ln();
    let value = (-lambda_max * t_max).exp() * p_min * (lambda_min / (2.0 * v * v + lambda_min));
    let count = graph.vertex_count() as u64;
    ContractionConstant {
        value,
        ln_value,
        m_min: 2 * count * count + 1,
    }
}

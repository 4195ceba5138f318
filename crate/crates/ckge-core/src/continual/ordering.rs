//! Curriculum ordering of a snapshot delta by proximity to the known graph.

use crate::kg::Triple;

/// BFS layering: layer 0 holds triples with both endpoints already known,
/// each following layer holds triples touching the entity set opened by
/// earlier layers. Within a layer, triples sort by descending endpoint
/// degree (within the delta), input order breaking ties. Components with no
/// path to the known set are seeded from their highest-degree triple.
pub fn order_triples(delta: &[Triple], known_below: u32) -> Vec<Triple> {
    order_triples_layered(delta, known_below)
        .into_iter()
        .map(|(t, _)| t)
        .collect()
}

pub fn order_triples_layered(delta: &[Triple], known_below: u32) -> Vec<(Triple, usize)> {
    use std::collections::HashMap;
    let mut degree: HashMap<u32, usize> = HashMap::new();
    for t in delta {
        *degree.entry(t.head).or_default() += 1;
        if t.tail != t.head {
            *degree.entry(t.tail).or_default() += 1;
        }
    }
    let deg_sum = |t: &Triple| {
        degree.get(&t.head).copied().unwrap_or(0) + degree.get(&t.tail).copied().unwrap_or(0)
    };

    let mut known: std::collections::HashSet<u32> = (0..known_below).collect();
    let mut placed = vec![false; delta.len()];
    let mut out: Vec<(Triple, usize)> = Vec::with_capacity(delta.len());

    let mut emit = |layer: &mut Vec<usize>,
                    layer_idx: usize,
                    placed: &mut Vec<bool>,
                    known: &mut std::collections::HashSet<u32>| {
        // Stable sort keeps input order among equal degree sums.
        layer.sort_by_key(|&i| std::cmp::Reverse(deg_sum(&delta[i])));
        for &i in layer.iter() {
            placed[i] = true;
            out.push((delta[i], layer_idx));
        }
        for &i in layer.iter() {
            known.insert(delta[i].head);
            known.insert(delta[i].tail);
        }
    };

    // Layer 0: both endpoints already known.
    let mut layer: Vec<usize> = (0..delta.len())
        .filter(|&i| known.contains(&delta[i].head) && known.contains(&delta[i].tail))
        .collect();
    emit(&mut layer, 0, &mut placed, &mut known);

    let mut layer_idx = 1usize;
    while placed.iter().any(|&p| !p) {
        let mut layer: Vec<usize> = (0..delta.len())
            .filter(|&i| {
                !placed[i] && (known.contains(&delta[i].head) || known.contains(&delta[i].tail))
            })
            .collect();
        if layer.is_empty() {
            // Disconnected remainder: seed a fresh island from the
            // highest-degree unplaced triple (earliest input on ties).
            let seed = (0..delta.len())
                .filter(|&i| !placed[i])
                .max_by_key(|&i| (deg_sum(&delta[i]), std::cmp::Reverse(i)))
                .unwrap();
            layer = vec![seed];
        }
        emit(&mut layer, layer_idx, &mut placed, &mut known);
        layer_idx += 1;
    }
    out
}

use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientPartition {
    pub client_indices: Vec<Vec<usize>>,
    pub dirichlet_alpha: f64,
    /// Empty clients that were given a sample taken from the largest client.
    pub repairs: usize,
}

impl ClientPartition {
    pub fn num_clients(&self) -> usize {
        self.client_indices.len()
    }
}

/// Per-class Dirichlet allocation: each class's samples are split across the
/// `num_clients` clients by proportions drawn from `Dirichlet(alpha * 1)`.
/// Clients left empty receive one sample from the currently largest client.
pub fn dirichlet_partition(
    labels: &[usize],
    num_clients: usize,
    alpha: f64,
    rng: &mut Rng,
) -> Result<ClientPartition> {
    if num_clients == 0 {
        return Err(Error::invalid("need at least one client"));
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::invalid(format!(
            "dirichlet alpha {alpha} must be positive"
        )));
    }
    if labels.len() < num_clients {
        return Err(Error::invalid(format!(
            "{} samples cannot cover {num_clients} clients",
            labels.len()
        )));
    }
    let num_classes = labels.iter().copied().max().map_or(0, |m| m + 1);
    let gamma = Gamma::new(alpha, 1.0).map_err(|e| Error::invalid(e.to_string()))?;
    let mut clients: Vec<Vec<usize>> = vec![Vec::new(); num_clients];

    for class in 0..num_classes {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if members.is_empty() {
            continue;
        }
        rng.shuffle(&mut members);
        let mut props: Vec<f64> = (0..num_clients).map(|_| gamma.sample(rng)).collect();
        let total: f64 = props.iter().sum();
        if total > 0.0 && total.is_finite() {
            props.iter_mut().for_each(|p| *p /= total);
        } else {
            // every gamma draw underflowed; give the class to one client
            let pick = rng.sample_indices(num_clients, 1)[0];
            props = vec![0.0; num_clients];
            props[pick] = 1.0;
        }
        let count = members.len();
        let mut start = 0usize;
        let mut cumulative = 0.0;
        for (client, p) in props.iter().enumerate() {
            cumulative += p;
            let end = if client + 1 == num_clients {
                count
            } else {
                ((cumulative * count as f64).round() as usize).clamp(start, count)
            };
            clients[client].extend_from_slice(&members[start..end]);
            start = end;
        }
    }

    let mut repairs = 0;
    for c in 0..num_clients {
        if clients[c].is_empty() {
            let donor = (0..num_clients)
                .max_by(|&a, &b| clients[a].len().cmp(&clients[b].len()).then(b.cmp(&a)))
                .expect("at least one client");
            let sample = clients[donor].pop().expect("donor is nonempty");
            clients[c].push(sample);
            repairs += 1;
        }
    }
    for list in clients.iter_mut() {
        list.sort_unstable();
    }

    Ok(ClientPartition {
        client_indices: clients,
        dirichlet_alpha: alpha,
        repairs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(m: usize, c: usize) -> Vec<usize> {
        (0..m).map(|i| i % c).collect()
    }

    fn assert_set_partition(p: &ClientPartition, m: usize) {
        let mut seen = vec![false; m];
        for list in &p.client_indices {
            assert!(!list.is_empty());
            for &i in list {
                assert!(!seen[i], "sample {i} assigned twice");
                seen[i] = true;
            }
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn single_client_gets_everything() {
        let y = labels(50, 5);
        let p = dirichlet_partition(&y, 1, 0.1, &mut Rng::new(0)).unwrap();
        assert_eq!(p.client_indices[0], (0..50).collect::<Vec<_>>());
    }

    #[test]
    fn skewed_partition_is_a_cover() {
        let y = labels(1000, 10);
        for seed in 0..5 {
            let p = dirichlet_partition(&y, 100, 0.1, &mut Rng::new(seed)).unwrap();
            assert_set_partition(&p, 1000);
        }
    }

    #[test]
    fn small_alpha_skews_clients() {
        let y = labels(2000, 10);
        let p = dirichlet_partition(&y, 20, 0.1, &mut Rng::new(3)).unwrap();
        let few_classes = p
            .client_indices
            .iter()
            .filter(|list| {
                let mut present = [false; 10];
                list.iter().for_each(|&i| present[y[i]] = true);
                present.iter().filter(|&&b| b).count() <= 3
            })
            .count();
        assert!(few_classes > 0);
    }

    #[test]
    fn huge_alpha_matches_global_histogram() {
        let c = 10;
        let y = labels(20_000, c);
        for seed in 0..10 {
            let p = dirichlet_partition(&y, 10, 1e6, &mut Rng::new(seed)).unwrap();
            for list in &p.client_indices {
                let mut hist = vec![0.0; c];
                list.iter().for_each(|&i| hist[y[i]] += 1.0);
                let tv: f64 = hist
                    .iter()
                    .map(|h| (h / list.len() as f64 - 0.1).abs())
                    .sum::<f64>()
                    / 2.0;
                assert!(tv < 0.05, "total variation {tv}");
            }
        }
    }

    #[test]
    fn rejects_bad_arguments() {
        let y = labels(10, 2);
        assert!(dirichlet_partition(&y, 0, 0.1, &mut Rng::new(0)).is_err());
        assert!(dirichlet_partition(&y, 2, 0.0, &mut Rng::new(0)).is_err());
        assert!(dirichlet_partition(&y, 11, 0.1, &mut Rng::new(0)).is_err());
    }
}

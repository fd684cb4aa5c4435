//! Linear-chain CRF over BIOS tags.

use crate::corpus::Bios;
use crate::encoder::tensor::{log_sum_exp, Tensor};

/// Tag inventory: id 0 is `O`, then `B`, `I`, `S` for each role in sorted order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TagSet {
    roles: Vec<String>,
}

impl TagSet {
    pub fn new(roles: impl IntoIterator<Item = String>) -> Self {
        let mut roles: Vec<String> = roles.into_iter().collect();
        roles.sort();
        roles.dedup();
        TagSet { roles }
    }

    /// Roles found in any of the tag sequences.
    pub fn from_tags<'a>(sequences: impl IntoIterator<Item = &'a [Bios]>) -> Self {
        Self::new(
            sequences
                .into_iter()
                .flat_map(|s| s.iter().filter_map(|t| t.role().map(str::to_string))),
        )
    }

    pub fn roles(&self) -> &[String] {
        &self.roles
    }

    pub fn len(&self) -> usize {
        1 + 3 * self.roles.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// `None` for a tag whose role is not in the set.
    pub fn id(&self, tag: &Bios) -> Option<usize> {
        let Some(role) = tag.role() else {
            return Some(0);
        };
        let r = self.roles.binary_search_by(|x| x.as_str().cmp(role)).ok()?;
        let offset = match tag {
            Bios::B(_) => 0,
            Bios::I(_) => 1,
            _ => 2,
        };
        Some(1 + 3 * r + offset)
    }

    pub fn tag(&self, id: usize) -> Bios {
        if id == 0 {
            return Bios::O;
        }
        let role = self.roles[(id - 1) / 3].clone();
        match (id - 1) % 3 {
            0 => Bios::B(role),
            1 => Bios::I(role),
            _ => Bios::S(role),
        }
    }

    pub fn names(&self) -> Vec<String> {
        (0..self.len()).map(|i| self.tag(i).to_string()).collect()
    }
}

/// Transition, start and end scores for `k` tags.
#[derive(Debug, Clone, PartialEq)]
pub struct Crf {
    /// k × k, row = previous tag.
    pub trans: Tensor,
    pub start: Tensor,
    pub end: Tensor,
}

impl Crf {
    pub fn zeros(k: usize) -> Self {
        Crf {
            trans: Tensor::zeros(k, k),
            start: Tensor::zeros(1, k),
            end: Tensor::zeros(1, k),
        }
    }

    pub fn num_tags(&self) -> usize {
        self.start.len()
    }

    /// Unnormalized log score of one tag path.
    pub fn score(&self, emissions: &Tensor, tags: &[usize]) -> f64 {
        assert_eq!(tags.len(), emissions.rows(), "tag path length differs from emissions");
        if tags.is_empty() {
            return 0.0;
        }
        let mut s = self.start.data()[tags[0]] + emissions.at(0, tags[0]);
        for t in 1..tags.len() {
            s += self.trans.at(tags[t - 1], tags[t]) + emissions.at(t, tags[t]);
        }
        s + self.end.data()[tags[tags.len() - 1]]
    }

    fn alphas(&self, emissions: &Tensor) -> Tensor {
        let (n, k) = emissions.shape();
        let mut alpha = Tensor::zeros(n, k);
        for j in 0..k {
            alpha.row_mut(0)[j] = self.start.data()[j] + emissions.at(0, j);
        }
        let mut buf = vec![0.0; k];
        for t in 1..n {
            for j in 0..k {
                for (i, b) in buf.iter_mut().enumerate() {
                    *b = alpha.at(t - 1, i) + self.trans.at(i, j);
                }
                alpha.row_mut(t)[j] = log_sum_exp(&buf) + emissions.at(t, j);
            }
        }
        alpha
    }

    fn betas(&self, emissions: &Tensor) -> Tensor {
        let (n, k) = emissions.shape();
        let mut beta = Tensor::zeros(n, k);
        beta.row_mut(n - 1).copy_from_slice(self.end.data());
        let mut buf = vec![0.0; k];
        for t in (0..n - 1).rev() {
            for i in 0..k {
                for (j, b) in buf.iter_mut().enumerate() {
                    *b = self.trans.at(i, j) + emissions.at(t + 1, j) + beta.at(t + 1, j);
                }
                beta.row_mut(t)[i] = log_sum_exp(&buf);
            }
        }
        beta
    }

    /// log Σ over all tag paths of exp(score), by the forward algorithm.
    pub fn log_partition(&self, emissions: &Tensor) -> f64 {
        let n = emissions.rows();
        if n == 0 {
            return 0.0;
        }
        let alpha = self.alphas(emissions);
        let last: Vec<f64> = alpha
            .row(n - 1)
            .iter()
            .zip(self.end.data())
            .map(|(a, e)| a + e)
            .collect();
        log_sum_exp(&last)
    }

    pub fn nll(&self, emissions: &Tensor, tags: &[usize]) -> f64 {
        self.log_partition(emissions) - self.score(emissions, tags)
    }

    /// Negative log-likelihood plus gradients. `d_emissions` receives the
    /// emission gradient; transition/start/end gradients go to `grads`, all
    /// scaled by `scale`.
    pub fn nll_backward(
        &self,
        emissions: &Tensor,
        tags: &[usize],
        scale: f64,
        d_emissions: &mut Tensor,
        grads: &mut Crf,
    ) -> f64 {
        let (n, k) = emissions.shape();
        if n == 0 {
            return 0.0;
        }
        let alpha = self.alphas(emissions);
        let beta = self.betas(emissions);
        let last: Vec<f64> = alpha
            .row(n - 1)
            .iter()
            .zip(self.end.data())
            .map(|(a, e)| a + e)
            .collect();
        let log_z = log_sum_exp(&last);
        for t in 0..n {
            for j in 0..k {
                let p = (alpha.at(t, j) + beta.at(t, j) - log_z).exp();
                d_emissions.row_mut(t)[j] += scale * p;
                if t == 0 {
                    grads.start.data_mut()[j] += scale * p;
                }
                if t == n - 1 {
                    grads.end.data_mut()[j] += scale * p;
                }
            }
        }
        for t in 1..n {
            for i in 0..k {
                for j in 0..k {
                    let p =
                        (alpha.at(t - 1, i) + self.trans.at(i, j) + emissions.at(t, j) + beta.at(t, j) - log_z).exp();
                    grads.trans.row_mut(i)[j] += scale * p;
                }
            }
        }
        for (t, &y) in tags.iter().enumerate() {
            d_emissions.row_mut(t)[y] -= scale;
            if t > 0 {
                grads.trans.row_mut(tags[t - 1])[y] -= scale;
            }
        }
        grads.start.data_mut()[tags[0]] -= scale;
        grads.end.data_mut()[tags[n - 1]] -= scale;
        log_z - self.score(emissions, tags)
    }

    /// Highest-scoring tag path. Ties go to the lowest tag id, both when
    /// choosing the final tag and at every backtrack step.
    pub fn viterbi(&self, emissions: &Tensor) -> Vec<usize> {
        let (n, k) = emissions.shape();
        if n == 0 {
            return Vec::new();
        }
        let mut delta: Vec<f64> = (0..k).map(|j| self.start.data()[j] + emissions.at(0, j)).collect();
        let mut back = vec![vec![0usize; k]; n];
        for t in 1..n {
            let mut next = vec![0.0; k];
            for j in 0..k {
                let mut best = 0;
                let mut best_score = delta[0] + self.trans.at(0, j);
                for (i, &d) in delta.iter().enumerate().skip(1) {
                    let s = d + self.trans.at(i, j);
                    if s > best_score {
                        best = i;
                        best_score = s;
                    }
                }
                back[t][j] = best;
                next[j] = best_score + emissions.at(t, j);
            }
            delta = next;
        }
        let mut tag = 0;
        let mut best = delta[0] + self.end.data()[0];
        for (j, &d) in delta.iter().enumerate().skip(1) {
            let s = d + self.end.data()[j];
            if s > best {
                tag = j;
                best = s;
            }
        }
        let mut path = vec![tag; n];
        for t in (1..n).rev() {
            tag = back[t][tag];
            path[t - 1] = tag;
        }
        path
    }
}

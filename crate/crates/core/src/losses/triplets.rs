use crate::diffcore::Tensor;
use crate::error::{dim_err, param_err, Result};
use crate::scalar::Real;

/// Which side of the pair plays the anchor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Direction {
    /// Anchor is a query row; positive and negative are reference rows.
    QueryToRef,
    /// Anchor is a reference row; positive and negative are query rows.
    RefToQuery,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Triplet {
    pub anchor: usize,
    pub positive: usize,
    pub negative: usize,
    pub direction: Direction,
}

impl Triplet {
    /// `(query row, reference row)` of the positive pair.
    pub fn positive_pair(&self) -> (usize, usize) {
        match self.direction {
            Direction::QueryToRef => (self.anchor, self.positive),
            Direction::RefToQuery => (self.positive, self.anchor),
        }
    }

    /// `(query row, reference row)` of the negative pair.
    pub fn negative_pair(&self) -> (usize, usize) {
        match self.direction {
            Direction::QueryToRef => (self.anchor, self.negative),
            Direction::RefToQuery => (self.negative, self.anchor),
        }
    }
}

/// Triplets over a batch of `batch_size` aligned (query, reference) pairs;
/// row `i` of the query side matches row `i` of the reference side.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TripletBatch {
    pub triples: Vec<Triplet>,
    pub batch_size: usize,
}

impl TripletBatch {
    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }
}

/// Every in-batch negative in both directions: `2·B·(B−1)` triplets,
/// query-anchored first, ascending anchor then negative.
pub fn enumerate_exhaustive_triplets(batch_size: usize) -> Result<TripletBatch> {
    if batch_size < 2 {
        return Err(param_err!("exhaustive triplets need B ≥ 2, got {batch_size}"));
    }
    let mut triples = Vec::with_capacity(2 * batch_size * (batch_size - 1));
    for direction in [Direction::QueryToRef, Direction::RefToQuery] {
        for i in 0..batch_size {
            for j in (0..batch_size).filter(|&j| j != i) {
                triples.push(Triplet {
                    anchor: i,
                    positive: i,
                    negative: j,
                    direction,
                });
            }
        }
    }
    Ok(TripletBatch {
        triples,
        batch_size,
    })
}

/// One hardest in-batch negative per anchor in each direction.
///
/// `dist[i][j]` is the distance between query `i` and reference `j`.
/// Query anchors scan their row, reference anchors their column, both
/// skipping the diagonal; ties go to the lowest index.
pub fn mine_hard_negatives<T: Real>(dist: &Tensor<T>) -> Result<TripletBatch> {
    let s = dist.shape();
    if s.len() != 2 || s[0] != s[1] {
        return Err(dim_err!("hard-negative mining needs a square matrix, got {s:?}"));
    }
    let b = s[0];
    if b < 2 {
        return Err(param_err!("hard-negative mining needs B ≥ 2, got {b}"));
    }
    let argmin = |get: &dyn Fn(usize) -> T, skip: usize| -> usize {
        let mut best = usize::MAX;
        let mut best_d = T::infinity();
        for j in (0..b).filter(|&j| j != skip) {
            let d = get(j);
            if best == usize::MAX || d < best_d {
                best = j;
                best_d = d;
            }
        }
        best
    };
    let mut triples = Vec::with_capacity(2 * b);
    for i in 0..b {
        triples.push(Triplet {
            anchor: i,
            positive: i,
            negative: argmin(&|j| dist.at2(i, j), i),
            direction: Direction::QueryToRef,
        });
    }
    for i in 0..b {
        triples.push(Triplet {
            anchor: i,
            positive: i,
            negative: argmin(&|j| dist.at2(j, i), i),
            direction: Direction::RefToQuery,
        });
    }
    Ok(TripletBatch {
        triples,
        batch_size: b,
    })
}

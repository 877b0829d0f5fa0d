//! FIFO transition storage with uniform, with-replacement minibatch sampling.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};
use rand::Rng;

use crate::envs::EndKind;
use crate::error::{Error, Result};
use crate::format::*;

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub end: EndKind,
}

/// Column-structured minibatch: one transition per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub states: Array2<f64>,
    pub actions: Array2<f64>,
    pub rewards: Array1<f64>,
    pub next_states: Array2<f64>,
    pub ends: Vec<EndKind>,
}

impl Batch {
    pub fn from_transitions<'a>(items: impl IntoIterator<Item = &'a Transition>) -> Result<Self> {
        let items: Vec<&Transition> = items.into_iter().collect();
        let first = items.first().ok_or(Error::EmptyBuffer)?;
        let (b, obs, act) = (items.len(), first.state.len(), first.action.len());
        let mut batch = Batch {
            states: Array2::zeros((b, obs)),
            actions: Array2::zeros((b, act)),
            rewards: Array1::zeros(b),
            next_states: Array2::zeros((b, obs)),
            ends: Vec::with_capacity(b),
        };
        for (i, t) in items.iter().enumerate() {
            if t.state.len() != obs || t.next_state.len() != obs || t.action.len() != act {
                return Err(Error::Shape(format!("transition {i} has inconsistent dims")));
            }
            batch
                .states
                .row_mut(i)
                .assign(&ndarray::aview1(&t.state));
            batch
                .actions
                .row_mut(i)
                .assign(&ndarray::aview1(&t.action));
            batch.rewards[i] = t.reward;
            batch
                .next_states
                .row_mut(i)
                .assign(&ndarray::aview1(&t.next_state));
            batch.ends.push(t.end);
        }
        Ok(batch)
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    storage: Vec<Transition>,
    /// Slot the next push overwrites once the ring is full.
    head: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::config("buffer_capacity", "must be at least 1"));
        }
        Ok(ReplayBuffer {
            capacity,
            storage: Vec::new(),
            head: 0,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.storage.len()
    }

    pub fn is_empty(&self) -> bool {
        self.storage.is_empty()
    }

    /// `(observation dim, action dim)` fixed by the first stored transition.
    pub fn dims(&self) -> Option<(usize, usize)> {
        self.storage
            .first()
            .map(|t| (t.state.len(), t.action.len()))
    }

    pub fn push(&mut self, t: Transition) -> Result<()> {
        if let Some((obs, act)) = self.dims() {
            if t.state.len() != obs || t.next_state.len() != obs || t.action.len() != act {
                return Err(Error::Shape(format!(
                    "transition dims ({}, {}, {}) differ from buffer ({obs}, {act}, {obs})",
                    t.state.len(),
                    t.action.len(),
                    t.next_state.len()
                )));
            }
        } else if t.state.len() != t.next_state.len() {
            return Err(Error::Shape(
                "state and next_state dims differ".to_string(),
            ));
        }
        let finite = t.reward.is_finite()
            && t.state.iter().chain(&t.next_state).all(|v| v.is_finite())
            && t.action.iter().all(|v| v.is_finite() && v.abs() <= 1.0);
        if !finite {
            return Err(Error::NonFinite(
                "transition holds a non-finite value or an action outside [-1, 1]".into(),
            ));
        }
        if self.storage.len() < self.capacity {
            self.storage.push(t);
        } else {
            self.storage[self.head] = t;
            self.head = (self.head + 1) % self.capacity;
        }
        Ok(())
    }

    /// Oldest-first view of the stored transitions.
    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        let (newer, older) = self.storage.split_at(self.head);
        older.iter().chain(newer)
    }

    /// The `i`-th oldest transition.
    pub fn get(&self, i: usize) -> Option<&Transition> {
        if i >= self.storage.len() {
            return None;
        }
        Some(&self.storage[(self.head + i) % self.storage.len()])
    }

    /// Draws `b` indices uniformly with replacement.
    pub fn sample_indices<R: Rng + ?Sized>(&self, b: usize, rng: &mut R) -> Result<Vec<usize>> {
        if self.storage.is_empty() {
            return Err(Error::EmptyBuffer);
        }
        let n = self.storage.len();
        Ok((0..b).map(|_| rng.random_range(0..n)).collect())
    }

    pub fn sample<R: Rng + ?Sized>(&self, b: usize, rng: &mut R) -> Result<Batch> {
        let idx = self.sample_indices(b, rng)?;
        Batch::from_transitions(idx.iter().map(|&i| &self.storage[i]))
    }

    /// Stacked states of every stored transition, oldest first.
    pub fn states(&self) -> Array2<f64> {
        let obs = self.dims().map_or(0, |d| d.0);
        let mut out = Array2::zeros((self.len(), obs));
        for (i, t) in self.iter().enumerate() {
            out.row_mut(i).assign(&ndarray::aview1(&t.state));
        }
        out
    }
}

// File layout (little-endian):
//   magic "CGPBUF" | version u32 = 1 | obs_dim u64 | action_dim u64
//   | capacity u64 | count u64 | count × (state, action, reward, next_state
//   as f64, end kind u8), oldest first.
const MAGIC: &[u8; 6] = b"CGPBUF";
const VERSION: u32 = 1;

impl ReplayBuffer {
    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        let (obs, act) = self.dims().unwrap_or((0, 0));
        write_header(w, MAGIC, VERSION)?;
        write_u64(w, obs as u64)?;
        write_u64(w, act as u64)?;
        write_u64(w, self.capacity as u64)?;
        write_u64(w, self.len() as u64)?;
        for t in self.iter() {
            write_f64s(w, t.state.iter().copied())?;
            write_f64s(w, t.action.iter().copied())?;
            write_f64s(w, [t.reward])?;
            write_f64s(w, t.next_state.iter().copied())?;
            write_u8(w, t.end.code())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        read_header(r, MAGIC, VERSION)?;
        let obs = read_usize(r, "obs_dim", 1 << 20)?;
        let act = read_usize(r, "action_dim", 1 << 20)?;
        let capacity = read_usize(r, "capacity", 1 << 40)?;
        let count = read_usize(r, "count", capacity as u64)?;
        let mut buf = ReplayBuffer::new(capacity)?;
        buf.storage.reserve(count);
        for _ in 0..count {
            let state = read_f64s(r, obs)?;
            let action = read_f64s(r, act)?;
            let reward = read_f64s(r, 1)?[0];
            let next_state = read_f64s(r, obs)?;
            let code = read_u8(r)?;
            let end = EndKind::from_code(code)
                .ok_or_else(|| Error::Format(format!("unknown end kind {code}")))?;
            buf.push(Transition {
                state,
                action,
                reward,
                next_state,
                end,
            })?;
        }
        Ok(buf)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::MissingArtifact(path.to_path_buf()));
        }
        ReplayBuffer::read_from(&mut BufReader::new(File::open(path)?))
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn item(i: usize) -> Transition {
        Transition {
            state: vec![i as f64, 0.5],
            action: vec![0.1],
            reward: -(i as f64),
            next_state: vec![i as f64 + 1.0, 0.5],
            end: if i % 3 == 0 {
                EndKind::TimeLimit
            } else {
                EndKind::NotDone
            },
        }
    }

    /// χ² statistic of `draws` indices over `cells` equally likely cells.
    fn chi_square(counts: &[usize], draws: usize) -> f64 {
        let expected = draws as f64 / counts.len() as f64;
        counts
            .iter()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum()
    }

    fn chi_square_critical_001(dof: f64) -> f64 {
        use statrs::distribution::{ChiSquared, ContinuousCDF};
        ChiSquared::new(dof).unwrap().inverse_cdf(0.99)
    }

    #[test]
    fn push_to_empty() {
        let mut b = ReplayBuffer::new(10).unwrap();
        b.push(item(0)).unwrap();
        assert_eq!(b.len(), 1);
    }

    #[test]
    fn ring_evicts_oldest() {
        let mut b = ReplayBuffer::new(2).unwrap();
        for i in 1..=3 {
            b.push(item(i)).unwrap();
        }
        let held: Vec<_> = b.iter().map(|t| t.state[0] as usize).collect();
        assert_eq!(held, vec![2, 3]);
        assert_eq!(b.get(0).unwrap().state[0], 2.0);
        b.push(item(4)).unwrap();
        let held: Vec<_> = b.iter().map(|t| t.state[0] as usize).collect();
        assert_eq!(held, vec![3, 4]);
    }

    #[test]
    fn rejects_dim_mismatch() {
        let mut b = ReplayBuffer::new(4).unwrap();
        b.push(item(0)).unwrap();
        let mut bad = item(1);
        bad.action = vec![0.0, 0.0];
        assert!(matches!(b.push(bad), Err(Error::Shape(_))));
    }

    #[test]
    fn rejects_non_finite() {
        let mut b = ReplayBuffer::new(4).unwrap();
        let mut bad = item(0);
        bad.reward = f64::NAN;
        assert!(b.push(bad).is_err());
    }

    #[test]
    fn sampling_with_replacement_from_single_item() {
        let mut b = ReplayBuffer::new(4).unwrap();
        b.push(item(7)).unwrap();
        let batch = b.sample(3, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(batch.len(), 3);
        assert!(batch.states.column(0).iter().all(|&v| v == 7.0));
        assert_eq!(batch.states.dim(), (3, 2));
        assert_eq!(batch.actions.dim(), (3, 1));
    }

    #[test]
    fn empty_buffer_cannot_sample() {
        let b = ReplayBuffer::new(4).unwrap();
        assert!(matches!(
            b.sample(1, &mut ChaCha8Rng::seed_from_u64(0)),
            Err(Error::EmptyBuffer)
        ));
    }

    #[test]
    fn seeded_sampling_replays() {
        let mut b = ReplayBuffer::new(100).unwrap();
        for i in 0..50 {
            b.push(item(i)).unwrap();
        }
        let x = b.sample(16, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let y = b.sample(16, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn uniform_after_large_fill() {
        let mut b = ReplayBuffer::new(200_000).unwrap();
        for i in 0..100_000 {
            b.push(item(i)).unwrap();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let draws = 200_000;
        let cells = 100;
        let mut counts = vec![0usize; cells];
        for i in b.sample_indices(draws, &mut rng).unwrap() {
            counts[i * cells / b.len()] += 1;
        }
        let stat = chi_square(&counts, draws);
        assert!(stat < chi_square_critical_001((cells - 1) as f64), "χ² = {stat}");
    }

    #[test]
    fn uniform_over_small_buffer() {
        let mut b = ReplayBuffer::new(100).unwrap();
        for i in 0..100 {
            b.push(item(i)).unwrap();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let draws = 1_000_000;
        let mut counts = vec![0usize; 100];
        for i in b.sample_indices(draws, &mut rng).unwrap() {
            counts[i] += 1;
        }
        let stat = chi_square(&counts, draws);
        assert!(stat < chi_square_critical_001(99.0), "χ² = {stat}");
    }

    #[test]
    fn file_round_trip() {
        let mut b = ReplayBuffer::new(3).unwrap();
        for i in 0..5 {
            b.push(item(i)).unwrap();
        }
        let mut bytes = Vec::new();
        b.write_to(&mut bytes).unwrap();
        let back = ReplayBuffer::read_from(&mut bytes.as_slice()).unwrap();
        assert_eq!(back.capacity(), 3);
        assert!(back.iter().eq(b.iter()));
    }
}

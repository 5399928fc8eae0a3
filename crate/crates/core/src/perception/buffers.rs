use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::embedding::{dot, Embedding};
use super::PerceptionError;

/// Ranking used by both buffers: higher confidence first, later timestamp breaks ties.
fn rank(a: &Embedding, b: &Embedding) -> Ordering {
    b.confidence
        .total_cmp(&a.confidence)
        .then(b.timestamp.total_cmp(&a.timestamp))
}

fn outranks(candidate: &Embedding, incumbent: &Embedding) -> bool {
    rank(candidate, incumbent) == Ordering::Less
}

/// The `capacity` highest-confidence embeddings seen so far, best first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemporalBuffer {
    capacity: usize,
    entries: Vec<Embedding>,
}

impl TemporalBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "temporal buffer capacity must be positive");
        Self {
            capacity,
            entries: Vec::with_capacity(capacity + 1),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn entries(&self) -> &[Embedding] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }

    pub fn insert(&mut self, e: Embedding) {
        if self.entries.len() == self.capacity {
            let worst = self.entries.last().expect("full buffer");
            if !outranks(&e, worst) {
                return;
            }
            self.entries.pop();
        }
        let at = self
            .entries
            .partition_point(|x| rank(x, &e) == Ordering::Less);
        self.entries.insert(at, e);
    }
}

/// Functional form of [`TemporalBuffer::insert`].
pub fn update_temporal_buffer(buf: &TemporalBuffer, e: Embedding) -> TemporalBuffer {
    let mut next = buf.clone();
    next.insert(e);
    next
}

/// Best embedding per viewing-distance bin. Bin `i` (1-based) covers `[(i-1)Δd, iΔd)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceFrameBuffer {
    bin_width: f64,
    bins: Vec<Option<Embedding>>,
}

impl DistanceFrameBuffer {
    pub fn new(bin_width: f64, bin_count: usize) -> Self {
        assert!(bin_width > 0.0 && bin_count > 0, "invalid distance buffer layout");
        Self {
            bin_width,
            bins: vec![None; bin_count],
        }
    }

    pub fn bin_width(&self) -> f64 {
        self.bin_width
    }

    pub fn bin_count(&self) -> usize {
        self.bins.len()
    }

    /// 1-based bin index for a capture distance.
    pub fn bin_index(&self, distance: f64) -> usize {
        (distance / self.bin_width).floor() as usize + 1
    }

    /// Occupant of 1-based bin `i`.
    pub fn bin(&self, i: usize) -> Option<&Embedding> {
        if i == 0 {
            return None;
        }
        self.bins.get(i - 1).and_then(|b| b.as_ref())
    }

    pub fn occupied(&self) -> impl Iterator<Item = &Embedding> {
        self.bins.iter().flatten()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.iter().all(Option::is_none)
    }

    pub fn clear(&mut self) {
        self.bins.iter_mut().for_each(|b| *b = None);
    }

    pub fn insert(&mut self, e: Embedding) {
        debug_assert!(e.distance_at_capture >= 0.0);
        let i = self.bin_index(e.distance_at_capture);
        if i > self.bins.len() {
            return;
        }
        let slot = &mut self.bins[i - 1];
        match slot {
            Some(cur) if !outranks(&e, cur) => {}
            _ => *slot = Some(e),
        }
    }
}

/// Functional form of [`DistanceFrameBuffer::insert`].
pub fn update_distance_buffer(buf: &DistanceFrameBuffer, e: Embedding) -> DistanceFrameBuffer {
    let mut next = buf.clone();
    next.insert(e);
    next
}

/// Max cosine similarity against the union of both buffers.
pub fn match_leader(
    query: &Embedding,
    tb: &TemporalBuffer,
    dfb: &DistanceFrameBuffer,
    threshold: f64,
) -> Result<(bool, f64), PerceptionError> {
    debug_assert!(threshold > 0.0 && threshold < 1.0);
    let score = tb
        .entries()
        .iter()
        .chain(dfb.occupied())
        .map(|e| dot(&query.vector, &e.vector))
        .fold(None, |acc: Option<f64>, s| Some(acc.map_or(s, |a| a.max(s))))
        .ok_or(PerceptionError::EmptyBuffers)?;
    Ok((score >= threshold, score))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MemoryConfig {
    pub temporal_capacity: usize,
    pub bin_width: f64,
    pub bin_count: usize,
    pub match_threshold: f64,
    /// Disabling this keeps the distance buffer empty (temporal-only memory).
    pub use_distance_buffer: bool,
}

impl Default for MemoryConfig {
    fn default() -> Self {
        Self {
            temporal_capacity: 8,
            bin_width: 1.0,
            bin_count: 10,
            match_threshold: 0.8,
            use_distance_buffer: true,
        }
    }
}

/// Both leader memories plus their update policy.
#[derive(Debug, Clone, PartialEq)]
pub struct LeaderMemory {
    pub config: MemoryConfig,
    pub temporal: TemporalBuffer,
    pub distance: DistanceFrameBuffer,
}

impl LeaderMemory {
    pub fn new(config: MemoryConfig) -> Self {
        Self {
            config,
            temporal: TemporalBuffer::new(config.temporal_capacity),
            distance: DistanceFrameBuffer::new(config.bin_width, config.bin_count),
        }
    }

    pub fn insert(&mut self, e: Embedding) {
        if self.config.use_distance_buffer {
            self.distance.insert(e.clone());
        }
        self.temporal.insert(e);
    }

    pub fn matches(&self, query: &Embedding) -> Result<(bool, f64), PerceptionError> {
        match_leader(query, &self.temporal, &self.distance, self.config.match_threshold)
    }

    /// Empties both buffers and seeds them with the new leader's first embedding.
    pub fn reset_with(&mut self, first: Embedding) {
        self.temporal.clear();
        self.distance.clear();
        self.insert(first);
    }

    pub fn dump(&self) -> BufferDump {
        BufferDump {
            temporal: self
                .temporal
                .entries()
                .iter()
                .map(|e| BufferEntry {
                    confidence: e.confidence,
                    timestamp: e.timestamp,
                    distance: e.distance_at_capture,
                })
                .collect(),
            distance_bins: (1..=self.distance.bin_count())
                .map(|i| BinEntry {
                    bin: i,
                    range: [
                        (i - 1) as f64 * self.distance.bin_width(),
                        i as f64 * self.distance.bin_width(),
                    ],
                    entry: self.distance.bin(i).map(|e| BufferEntry {
                        confidence: e.confidence,
                        timestamp: e.timestamp,
                        distance: e.distance_at_capture,
                    }),
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BufferEntry {
    pub confidence: f64,
    pub timestamp: f64,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinEntry {
    pub bin: usize,
    pub range: [f64; 2],
    pub entry: Option<BufferEntry>,
}

/// Debug snapshot of both buffers, serializable to JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BufferDump {
    pub temporal: Vec<BufferEntry>,
    pub distance_bins: Vec<BinEntry>,
}

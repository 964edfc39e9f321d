//! Latest-value distribution of decoded diagnostic frames.
//!
//! A [`DiagChannel`] fans every published frame out to its subscriptions.
//! Each [`Subscription`] owns one triple-buffered slot per message type it
//! asked for, so
//!
//! * the publisher never waits on a reader: it writes into a free slot and
//!   flips an atomic index;
//! * a reader never observes a torn frame: it always gets the most recent
//!   *completely written* value;
//! * every frame carries a per-message-type sequence number that is strictly
//!   increasing in publish order, so readers can tell "new frame" from "same
//!   frame again".
//!
//! This is a latest-value channel, not a queue: a reader that polls slower
//! than the publisher writes simply skips intermediate frames.

use std::cell::UnsafeCell;
use std::sync::atomic::{AtomicU8, Ordering};
use std::sync::Arc;

use super::{DiagFrame, MsgType};

const IDX_MASK: u8 = 0b011;
const DIRTY: u8 = 0b100;

/// Shared state of one single-producer / single-consumer triple buffer.
///
/// `state` packs the index of the "middle" slot (the one neither side is
/// touching) with a dirty flag that tells the reader a newer value is waiting
/// there. The writer exclusively owns its back slot and the reader its front
/// slot, so the only synchronization point is the atomic swap of `state`.
struct TripleShared<T> {
    slots: [UnsafeCell<Option<T>>; 3],
    state: AtomicU8,
}

// Soundness: a slot is only ever accessed by the side that currently owns its
// index, and ownership is transferred through `state` swaps with AcqRel
// ordering.
unsafe impl<T: Send> Sync for TripleShared<T> {}
unsafe impl<T: Send> Send for TripleShared<T> {}

struct TripleWriter<T> {
    shared: Arc<TripleShared<T>>,
    back: u8,
}

struct TripleReader<T> {
    shared: Arc<TripleShared<T>>,
    front: u8,
}

fn triple_buffer<T>() -> (TripleWriter<T>, TripleReader<T>) {
    let shared = Arc::new(TripleShared {
        slots: [UnsafeCell::new(None), UnsafeCell::new(None), UnsafeCell::new(None)],
        state: AtomicU8::new(1), // middle = slot 1, clean
    });
    (TripleWriter { shared: Arc::clone(&shared), back: 0 }, TripleReader { shared, front: 2 })
}

impl<T> TripleWriter<T> {
    fn write(&mut self, value: T) {
        // The back slot is exclusively ours until the swap below hands it over.
        unsafe { *self.shared.slots[self.back as usize].get() = Some(value) };
        let prev = self.shared.state.swap(DIRTY | self.back, Ordering::AcqRel);
        self.back = prev & IDX_MASK;
    }
}

impl<T> TripleReader<T> {
    /// Returns the latest completely published value, or `None` before the
    /// first write. Never blocks and never spins.
    fn read(&mut self) -> Option<&T> {
        if self.shared.state.load(Ordering::Acquire) & DIRTY != 0 {
            let prev = self.shared.state.swap(self.front, Ordering::AcqRel);
            self.front = prev & IDX_MASK;
        }
        unsafe { (*self.shared.slots[self.front as usize].get()).as_ref() }
    }
}

/// A frame together with its publish sequence number.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LatestFrame {
    pub frame: DiagFrame,
    /// Strictly increasing per message type; starts at 1.
    pub seq: u64,
}

/// Reader half of a channel subscription. Owned by one consumer (it is `Send`
/// but deliberately not `Clone`); hand out one subscription per reader.
pub struct Subscription {
    readers: [Option<TripleReader<LatestFrame>>; 3],
}

impl Subscription {
    /// Latest frame of `msg_type`, or `None` if nothing of that type has been
    /// published yet (or the subscription doesn't include it). Repeated calls
    /// without an intervening publish return the same sequence number.
    pub fn read_latest(&mut self, msg_type: MsgType) -> Option<LatestFrame> {
        self.readers[msg_type.slot()].as_mut()?.read().cloned()
    }
}

struct SubscriptionWriter {
    writers: [Option<TripleWriter<LatestFrame>>; 3],
}

/// Publisher side: fan-out point for decoded diagnostic frames.
#[derive(Default)]
pub struct DiagChannel {
    subs: Vec<SubscriptionWriter>,
    seq: [u64; 3],
}

impl DiagChannel {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a reader for the given message types.
    pub fn subscribe(&mut self, filter: &[MsgType]) -> Subscription {
        let mut writers = [None, None, None];
        let mut readers = [None, None, None];
        for &mt in filter {
            if writers[mt.slot()].is_none() {
                let (w, r) = triple_buffer();
                writers[mt.slot()] = Some(w);
                readers[mt.slot()] = Some(r);
            }
        }
        self.subs.push(SubscriptionWriter { writers });
        Subscription { readers }
    }

    /// Publishes a frame to every subscription that asked for its type.
    /// Returns the sequence number assigned to the frame.
    pub fn publish(&mut self, frame: &DiagFrame) -> u64 {
        let slot = frame.msg_type().slot();
        self.seq[slot] += 1;
        let seq = self.seq[slot];
        for sub in &mut self.subs {
            if let Some(w) = sub.writers[slot].as_mut() {
                w.write(LatestFrame { frame: *frame, seq });
            }
        }
        seq
    }

    /// Total frames published for one message type so far.
    pub fn published(&self, msg_type: MsgType) -> u64 {
        self.seq[msg_type.slot()]
    }
}

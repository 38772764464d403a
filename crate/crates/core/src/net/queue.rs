// Copyright (c) The Twins Forge Contributors
// SPDX-License-Identifier: Apache-2.0

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use super::{NetError, Tick};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
struct Key {
    tick: Tick,
    link: usize,
    seq: u64,
}

#[derive(Debug)]
struct Entry<T> {
    key: Key,
    item: T,
}

impl<T> PartialEq for Entry<T> {
    fn eq(&self, other: &Self) -> bool {
        self.key == other.key
    }
}
impl<T> Eq for Entry<T> {}
impl<T> PartialOrd for Entry<T> {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl<T> Ord for Entry<T> {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.key.cmp(&other.key)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Scheduled<T> {
    pub tick: Tick,
    pub link: usize,
    pub item: T,
}

/// Pending events in strict (tick, link, sequence) order.
///
/// The sequence number is global, so two events on one link at one tick
/// pop in insertion order.
#[derive(Debug)]
pub struct EventQueue<T> {
    heap: BinaryHeap<Reverse<Entry<T>>>,
    next_seq: u64,
    now: Tick,
}

impl<T> Default for EventQueue<T> {
    fn default() -> Self {
        Self { heap: BinaryHeap::new(), next_seq: 0, now: 0 }
    }
}

impl<T> EventQueue<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn now(&self) -> Tick {
        self.now
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    pub fn push(&mut self, tick: Tick, link: usize, item: T) -> Result<(), NetError> {
        if tick < self.now {
            return Err(NetError::OutOfOrder { event: tick, now: self.now });
        }
        let key = Key { tick, link, seq: self.next_seq };
        self.next_seq += 1;
        self.heap.push(Reverse(Entry { key, item }));
        Ok(())
    }

    pub fn peek_tick(&self) -> Option<Tick> {
        self.heap.peek().map(|Reverse(e)| e.key.tick)
    }

    /// Next event, advancing the clock; `None` signals the end of the run.
    pub fn pop(&mut self) -> Option<Scheduled<T>> {
        let Reverse(entry) = self.heap.pop()?;
        self.now = entry.key.tick;
        Some(Scheduled { tick: entry.key.tick, link: entry.key.link, item: entry.item })
    }

    /// Remove everything still pending, in pop order.
    pub fn drain(&mut self) -> Vec<Scheduled<T>> {
        let mut out = Vec::with_capacity(self.heap.len());
        while let Some(Reverse(entry)) = self.heap.pop() {
            out.push(Scheduled { tick: entry.key.tick, link: entry.key.link, item: entry.item });
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn lower_link_first_at_same_tick() {
        let mut q = EventQueue::new();
        q.push(3, 1, "b").unwrap();
        q.push(3, 0, "a").unwrap();
        assert_eq!(q.pop().unwrap().item, "a");
        assert_eq!(q.pop().unwrap().item, "b");
        assert!(q.pop().is_none());
    }

    #[test]
    fn fifo_within_link() {
        let mut q = EventQueue::new();
        for i in 0..5 {
            q.push(1, 2, i).unwrap();
        }
        let got: Vec<_> = std::iter::from_fn(|| q.pop().map(|s| s.item)).collect();
        assert_eq!(got, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn never_delivers_before_its_tick() {
        let mut q = EventQueue::new();
        q.push(7, 0, "late").unwrap();
        q.push(2, 5, "early").unwrap();
        let first = q.pop().unwrap();
        assert_eq!((first.tick, first.item), (2, "early"));
        let second = q.pop().unwrap();
        assert_eq!((second.tick, second.item), (7, "late"));
    }

    #[test]
    fn past_ticks_rejected() {
        let mut q = EventQueue::new();
        q.push(4, 0, ()).unwrap();
        q.pop();
        assert_eq!(q.push(3, 0, ()), Err(NetError::OutOfOrder { event: 3, now: 4 }));
    }

    proptest! {
        #[test]
        fn pops_are_totally_ordered(events in prop::collection::vec((0u64..20, 0usize..6), 0..60)) {
            let mut q = EventQueue::new();
            for (i, (t, l)) in events.iter().enumerate() {
                q.push(*t, *l, i).unwrap();
            }
            let mut prev: Option<(u64, usize, usize)> = None;
            while let Some(s) = q.pop() {
                let cur = (s.tick, s.link, s.item);
                if let Some(p) = prev {
                    prop_assert!((p.0, p.1) < (cur.0, cur.1) || ((p.0, p.1) == (cur.0, cur.1) && p.2 < cur.2));
                }
                prev = Some(cur);
            }
        }
    }
}

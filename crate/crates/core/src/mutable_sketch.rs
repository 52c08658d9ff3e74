//! The ingest-side sketch.
//!
//! A token map from fingerprints to either a directly encoded posting or a
//! handle into a list arena, plus a lookup map keyed by postings hash that
//! keeps every stored posting set unique. Whenever a token's list would grow,
//! the lookup map is probed for an existing list holding the grown set.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::mem::size_of;

use crate::error::{Error, Result};
use crate::hashing::{extend_hash, fingerprint, postings_hash, PostingId, PostingsHash, TokenFingerprint};
use crate::postings_codec::{ListConfig, MutablePostingList};

const TAG_SHIFT: u32 = 30;
const PAYLOAD_MASK: u32 = (1 << TAG_SHIFT) - 1;
const TAG_DIRECT: u32 = 0b01;
const TAG_LIST: u32 = 0b10;

/// Largest number of list handles a token map value can address.
pub const MAX_HANDLES: u32 = 1 << TAG_SHIFT;

/// 32-bit token map value; the two most significant bits are the tag.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub struct TokenMapValue(u32);

/// Decoded form of a [`TokenMapValue`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TokenRef {
    Absent,
    Direct(PostingId),
    List(u32),
}

impl TokenMapValue {
    pub const ABSENT: TokenMapValue = TokenMapValue(0);

    pub fn direct(p: PostingId) -> Self {
        TokenMapValue(TAG_DIRECT << TAG_SHIFT | p.0 as u32)
    }

    pub fn list(handle: u32) -> Self {
        debug_assert!(handle < MAX_HANDLES);
        TokenMapValue(TAG_LIST << TAG_SHIFT | handle)
    }

    pub fn from_raw(raw: u32) -> Self {
        TokenMapValue(raw)
    }

    pub fn raw(self) -> u32 {
        self.0
    }

    #[inline]
    pub fn decode(self) -> TokenRef {
        match self.0 >> TAG_SHIFT {
            TAG_DIRECT => TokenRef::Direct(PostingId((self.0 & PAYLOAD_MASK) as u16)),
            TAG_LIST => TokenRef::List(self.0 & PAYLOAD_MASK),
            _ => TokenRef::Absent,
        }
    }
}

/// Open-addressed, linearly probed map from fingerprint to value.
/// An all-zero (absent) value marks a free slot; entries are never removed.
#[derive(Clone, Debug)]
pub struct TokenMap {
    keys: Vec<u32>,
    values: Vec<TokenMapValue>,
    len: usize,
    shift: u32,
}

impl TokenMap {
    const INITIAL_BITS: u32 = 10;

    pub fn new() -> Self {
        Self::with_bits(Self::INITIAL_BITS)
    }

    fn with_bits(bits: u32) -> Self {
        TokenMap {
            keys: vec![0; 1 << bits],
            values: vec![TokenMapValue::ABSENT; 1 << bits],
            len: 0,
            shift: 64 - bits,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn capacity(&self) -> usize {
        self.keys.len()
    }

    #[inline]
    fn home(&self, key: u32) -> usize {
        ((key as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15) >> self.shift) as usize
    }

    /// Slot holding `key`, or the free slot where it would be inserted.
    #[inline]
    fn slot(&self, key: u32) -> usize {
        let mask = self.keys.len() - 1;
        let mut i = self.home(key);
        loop {
            if self.values[i] == TokenMapValue::ABSENT || self.keys[i] == key {
                return i;
            }
            i = (i + 1) & mask;
        }
    }

    pub fn get(&self, key: TokenFingerprint) -> TokenMapValue {
        let i = self.slot(key.0);
        self.values[i]
    }

    /// Returns the slot of `key`, reserving one if the key is new.
    fn entry(&mut self, key: u32) -> usize {
        let i = self.slot(key);
        if self.values[i] != TokenMapValue::ABSENT {
            return i;
        }
        if (self.len + 1) * 4 > self.keys.len() * 3 {
            self.grow();
            return self.slot(key);
        }
        i
    }

    fn set(&mut self, slot: usize, key: u32, value: TokenMapValue) {
        debug_assert!(value != TokenMapValue::ABSENT);
        if self.values[slot] == TokenMapValue::ABSENT {
            self.len += 1;
            self.keys[slot] = key;
        }
        self.values[slot] = value;
    }

    fn grow(&mut self) {
        let bits = 64 - self.shift + 1;
        let mut next = Self::with_bits(bits);
        for (k, v) in self.iter() {
            let i = next.slot(k.0);
            next.set(i, k.0, v);
        }
        *self = next;
    }

    pub fn iter(&self) -> impl Iterator<Item = (TokenFingerprint, TokenMapValue)> + '_ {
        self.keys
            .iter()
            .zip(&self.values)
            .filter(|(_, v)| **v != TokenMapValue::ABSENT)
            .map(|(&k, &v)| (TokenFingerprint(k), v))
    }
}

impl Default for TokenMap {
    fn default() -> Self {
        Self::new()
    }
}

const EMPTY_HANDLE: u32 = u32::MAX;

#[derive(Clone, Copy, Debug)]
struct LookupSlot {
    key: u64,
    handle: u32,
}

const FREE_SLOT: LookupSlot = LookupSlot {
    key: 0,
    handle: EMPTY_HANDLE,
};

/// Table from postings hash to list handle.
///
/// A list with hash `h` lives at the first free key `h, h+1, ...` (wrapping),
/// realized as slot `key mod size` in a power-of-two table. Removal shifts
/// later colliding entries back so a probe never crosses a gap between a
/// list's hash and its resident slot.
#[derive(Clone, Debug)]
pub struct LookupMap {
    slots: Vec<LookupSlot>,
    len: usize,
}

impl LookupMap {
    const INITIAL_SLOTS: usize = 256;

    pub fn new() -> Self {
        Self::with_slots(Self::INITIAL_SLOTS)
    }

    fn with_slots(n: usize) -> Self {
        debug_assert!(n.is_power_of_two());
        LookupMap {
            slots: vec![FREE_SLOT; n],
            len: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn capacity(&self) -> usize {
        self.slots.len()
    }

    #[inline]
    fn mask(&self) -> usize {
        self.slots.len() - 1
    }

    #[inline]
    fn home(&self, key: u64) -> usize {
        key as usize & self.mask()
    }

    /// Probes from `hash` for a resident with that hash accepted by `is_match`.
    pub fn find(&self, hash: PostingsHash, mut is_match: impl FnMut(u32) -> bool) -> Option<u32> {
        let mask = self.mask();
        let mut i = self.home(hash.0);
        loop {
            let slot = self.slots[i];
            if slot.handle == EMPTY_HANDLE {
                return None;
            }
            if slot.key == hash.0 && is_match(slot.handle) {
                return Some(slot.handle);
            }
            i = (i + 1) & mask;
        }
    }

    /// Insertion with collision skipping. If a resident with the same hash is
    /// accepted by `is_equal`, nothing is stored and its handle is returned.
    pub fn insert_with(
        &mut self,
        hash: PostingsHash,
        handle: u32,
        mut is_equal: impl FnMut(u32) -> bool,
    ) -> Option<u32> {
        debug_assert!(handle != EMPTY_HANDLE);
        if (self.len + 1) * 4 > self.slots.len() * 3 {
            self.grow();
        }
        let mask = self.mask();
        let mut i = self.home(hash.0);
        loop {
            let slot = self.slots[i];
            if slot.handle == EMPTY_HANDLE {
                self.slots[i] = LookupSlot { key: hash.0, handle };
                self.len += 1;
                return None;
            }
            if slot.key == hash.0 && is_equal(slot.handle) {
                return Some(slot.handle);
            }
            i = (i + 1) & mask;
        }
    }

    /// Removes `handle` (stored under `hash`) and back-shifts displaced entries.
    ///
    /// Panics if the handle is not reachable from its hash: that means the
    /// probe invariant was already broken.
    pub fn remove(&mut self, hash: PostingsHash, handle: u32) {
        let mask = self.mask();
        let mut i = self.home(hash.0);
        loop {
            let slot = self.slots[i];
            assert!(
                slot.handle != EMPTY_HANDLE,
                "lookup map integrity: list {handle} not found under {hash:?}"
            );
            if slot.handle == handle {
                break;
            }
            i = (i + 1) & mask;
        }
        let mut free = i;
        self.slots[free] = FREE_SLOT;
        self.len -= 1;
        let mut j = (free + 1) & mask;
        loop {
            let slot = self.slots[j];
            if slot.handle == EMPTY_HANDLE {
                break;
            }
            // Move when the entry's home is not cyclically inside (free, j].
            let home = self.home(slot.key);
            let dist_home = j.wrapping_sub(home) & mask;
            let dist_free = j.wrapping_sub(free) & mask;
            if dist_home >= dist_free {
                self.slots[free] = slot;
                self.slots[j] = FREE_SLOT;
                free = j;
            }
            j = (j + 1) & mask;
        }
    }

    fn grow(&mut self) {
        let mut next = Self::with_slots(self.slots.len() * 2);
        for slot in self.slots.iter().filter(|s| s.handle != EMPTY_HANDLE) {
            next.insert_with(PostingsHash(slot.key), slot.handle, |_| false);
        }
        *self = next;
    }

    pub fn iter(&self) -> impl Iterator<Item = (PostingsHash, u32)> + '_ {
        self.slots
            .iter()
            .filter(|s| s.handle != EMPTY_HANDLE)
            .map(|s| (PostingsHash(s.key), s.handle))
    }

    /// True iff every resident is reachable from its hash without crossing a free slot.
    pub fn probe_invariant_holds(&self) -> bool {
        let mask = self.mask();
        self.slots.iter().enumerate().all(|(pos, s)| {
            if s.handle == EMPTY_HANDLE {
                return true;
            }
            let mut i = self.home(s.key);
            while i != pos {
                if self.slots[i].handle == EMPTY_HANDLE {
                    return false;
                }
                i = (i + 1) & mask;
            }
            true
        })
    }

    /// Longest distance of a resident from its home slot.
    pub fn max_displacement(&self) -> usize {
        let mask = self.mask();
        self.slots
            .iter()
            .enumerate()
            .filter(|(_, s)| s.handle != EMPTY_HANDLE)
            .map(|(pos, s)| pos.wrapping_sub(self.home(s.key)) & mask)
            .max()
            .unwrap_or(0)
    }
}

impl Default for LookupMap {
    fn default() -> Self {
        Self::new()
    }
}

/// Outcome of inserting a list into the lookup map.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LookupInsert {
    /// The list was stored under its own handle.
    Inserted,
    /// An equal list already exists; its token count was incremented.
    Existing(u32),
}

/// Identifier of a unique posting set inside one sketch view.
///
/// Equal posting sets always get equal ids.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ListId(pub u64);

const DIRECT_ID_BIT: u64 = 1 << 32;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SketchStats {
    /// Distinct fingerprints.
    pub token_count: usize,
    /// Live materialized lists (each with at least two postings).
    pub list_count: usize,
    /// Tokens whose single posting is encoded in the token map.
    pub direct_count: usize,
    /// `1 - list_count / tokens_with_lists`.
    pub dedup_ratio: f64,
}

/// Mutable, instantly queryable multi-set membership sketch.
#[derive(Clone, Debug)]
pub struct MutableSketch {
    tokens: TokenMap,
    lookup: LookupMap,
    arena: Vec<Option<MutablePostingList>>,
    free: BinaryHeap<Reverse<u32>>,
    live_lists: usize,
    config: ListConfig,
    payload_bytes: usize,
    peak_payload_bytes: usize,
}

impl MutableSketch {
    pub fn new(capacity: u32) -> Result<Self> {
        Ok(Self::with_config(ListConfig::new(capacity)?))
    }

    pub fn with_config(config: ListConfig) -> Self {
        MutableSketch {
            tokens: TokenMap::new(),
            lookup: LookupMap::new(),
            arena: Vec::new(),
            free: BinaryHeap::new(),
            live_lists: 0,
            config,
            payload_bytes: 0,
            peak_payload_bytes: 0,
        }
    }

    pub fn capacity(&self) -> u32 {
        self.config.capacity
    }

    pub fn config(&self) -> ListConfig {
        self.config
    }

    pub fn token_count(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn add_token(&mut self, token: &[u8], p: PostingId) -> Result<()> {
        self.add(fingerprint(token)?, p)
    }

    /// Records that the token with fingerprint `fp` occurs in set `p`.
    pub fn add(&mut self, fp: TokenFingerprint, p: PostingId) -> Result<()> {
        self.config.check(p)?;
        let slot = self.tokens.entry(fp.0);
        match self.tokens.values[slot].decode() {
            TokenRef::Absent => self.tokens.set(slot, fp.0, TokenMapValue::direct(p)),
            TokenRef::Direct(q) if q == p => {}
            TokenRef::Direct(q) => {
                let h = self.find_or_create_pair(q, p)?;
                self.tokens.set(slot, fp.0, TokenMapValue::list(h));
            }
            TokenRef::List(h) => {
                if !self.list(h).contains_unchecked(p) {
                    self.extend(slot, fp.0, h, p)?;
                }
            }
        }
        Ok(())
    }

    fn find_or_create_pair(&mut self, q: PostingId, p: PostingId) -> Result<u32> {
        let hash = extend_hash(postings_hash([q]), p);
        let arena = &self.arena;
        let found = self.lookup.find(hash, |c| {
            let list = arena[c as usize].as_ref().unwrap();
            list.len() == 2 && list.contains_unchecked(q) && list.contains_unchecked(p)
        });
        if let Some(c) = found {
            self.list_mut(c).token_count += 1;
            return Ok(c);
        }
        let (lo, hi) = if q < p { (q, p) } else { (p, q) };
        let mut list = MutablePostingList::from_postings(self.config, &[lo, hi])?;
        list.token_count = 1;
        let h = self.alloc(list)?;
        let outcome = self.lookup_insert(h);
        assert_eq!(outcome, LookupInsert::Inserted, "pair list must be new");
        Ok(h)
    }

    fn extend(&mut self, slot: usize, key: u32, h: u32, p: PostingId) -> Result<()> {
        let (found, base_hash, base_refs) = {
            let base = self.list(h);
            let target = extend_hash(base.postings_hash(), p);
            let arena = &self.arena;
            let found = self.lookup.find(target, |c| {
                arena[c as usize].as_ref().unwrap().equals_extended(base, p)
            });
            (found, base.postings_hash(), base.token_count)
        };
        if let Some(c) = found {
            self.list_mut(c).token_count += 1;
            self.tokens.set(slot, key, TokenMapValue::list(c));
            self.release(h);
        } else if base_refs == 1 {
            self.lookup.remove(base_hash, h);
            let list = self.list_mut(h);
            let before = list.payload_bytes();
            list.insert(p)?;
            let after = list.payload_bytes();
            self.adjust_payload(before, after);
            let outcome = self.lookup_insert(h);
            assert_eq!(outcome, LookupInsert::Inserted, "extended list must be new");
        } else {
            let mut copy = self.list(h).clone();
            copy.insert(p)?;
            copy.token_count = 1;
            self.list_mut(h).token_count -= 1;
            let c = self.alloc(copy)?;
            let outcome = self.lookup_insert(c);
            assert_eq!(outcome, LookupInsert::Inserted, "copied list must be new");
            self.tokens.set(slot, key, TokenMapValue::list(c));
        }
        Ok(())
    }

    /// Stores the list at `handle` in the lookup map unless an equal list is
    /// already stored, in which case that list's token count is incremented.
    pub fn lookup_insert(&mut self, handle: u32) -> LookupInsert {
        let arena = &self.arena;
        let list = arena[handle as usize].as_ref().expect("dangling list handle");
        let hash = list.postings_hash();
        let existing = self.lookup.insert_with(hash, handle, |c| {
            c != handle && arena[c as usize].as_ref().unwrap().same_postings(list)
        });
        match existing {
            None => LookupInsert::Inserted,
            Some(c) => {
                self.list_mut(c).token_count += 1;
                LookupInsert::Existing(c)
            }
        }
    }

    /// Removes an unreferenced list from the lookup map.
    pub fn lookup_remove(&mut self, handle: u32) {
        let list = self.list(handle);
        debug_assert_eq!(list.token_count, 0);
        self.lookup.remove(list.postings_hash(), handle);
    }

    fn release(&mut self, h: u32) {
        let list = self.list_mut(h);
        list.token_count -= 1;
        if list.token_count == 0 {
            self.lookup_remove(h);
            let list = self.arena[h as usize].take().unwrap();
            self.adjust_payload(list.payload_bytes(), 0);
            self.free.push(Reverse(h));
            self.live_lists -= 1;
        }
    }

    fn alloc(&mut self, list: MutablePostingList) -> Result<u32> {
        self.adjust_payload(0, list.payload_bytes());
        self.live_lists += 1;
        if let Some(Reverse(h)) = self.free.pop() {
            self.arena[h as usize] = Some(list);
            return Ok(h);
        }
        let h = self.arena.len() as u32;
        if h >= MAX_HANDLES {
            return Err(Error::ArenaExhausted(MAX_HANDLES));
        }
        self.arena.push(Some(list));
        Ok(h)
    }

    fn adjust_payload(&mut self, before: usize, after: usize) {
        self.payload_bytes = self.payload_bytes + after - before;
        self.peak_payload_bytes = self.peak_payload_bytes.max(self.payload_bytes);
    }

    #[inline]
    fn list(&self, h: u32) -> &MutablePostingList {
        self.arena[h as usize].as_ref().expect("dangling list handle")
    }

    #[inline]
    fn list_mut(&mut self, h: u32) -> &mut MutablePostingList {
        self.arena[h as usize].as_mut().expect("dangling list handle")
    }

    /// List behind a live handle.
    pub fn list_by_handle(&self, h: u32) -> Option<&MutablePostingList> {
        self.arena.get(h as usize).and_then(Option::as_ref)
    }

    pub fn value(&self, fp: TokenFingerprint) -> TokenMapValue {
        self.tokens.get(fp)
    }

    /// Sorted postings of `fp`, or `None` if it was never added.
    pub fn get_postings(&self, fp: TokenFingerprint) -> Option<Vec<PostingId>> {
        match self.tokens.get(fp).decode() {
            TokenRef::Absent => None,
            TokenRef::Direct(q) => Some(vec![q]),
            TokenRef::List(h) => Some(self.list(h).to_vec()),
        }
    }

    /// Uniform reader capability: id of the posting set referenced by `fp`.
    pub fn list_id(&self, fp: TokenFingerprint) -> Option<ListId> {
        match self.tokens.get(fp).decode() {
            TokenRef::Absent => None,
            TokenRef::Direct(q) => Some(ListId(DIRECT_ID_BIT | q.0 as u64)),
            TokenRef::List(h) => Some(ListId(h as u64)),
        }
    }

    pub fn decode_list_id(&self, id: ListId) -> Result<Vec<PostingId>> {
        if id.0 & DIRECT_ID_BIT != 0 {
            let p = (id.0 & 0xffff) as u16;
            return Ok(vec![PostingId(p)]);
        }
        self.list_by_handle(id.0 as u32)
            .map(MutablePostingList::to_vec)
            .ok_or(Error::ListIdOutOfRange {
                id: id.0,
                count: self.arena.len() as u64,
            })
    }

    /// All (fingerprint, value) entries, in table order.
    pub fn entries(&self) -> impl Iterator<Item = (TokenFingerprint, TokenRef)> + '_ {
        self.tokens.iter().map(|(k, v)| (k, v.decode()))
    }

    /// Live lists with their handles.
    pub fn lists(&self) -> impl Iterator<Item = (u32, &MutablePostingList)> + '_ {
        self.arena
            .iter()
            .enumerate()
            .filter_map(|(h, l)| l.as_ref().map(|l| (h as u32, l)))
    }

    /// Deterministic accounting of the sketch's memory footprint in bytes.
    /// Never decreases while the sketch lives.
    pub fn estimate_memory(&self) -> usize {
        size_of::<Self>()
            + self.tokens.capacity() * (size_of::<u32>() + size_of::<TokenMapValue>())
            + self.lookup.capacity() * size_of::<LookupSlot>()
            + self.arena.capacity() * size_of::<Option<MutablePostingList>>()
            + self.free.capacity() * size_of::<u32>()
            + self.peak_payload_bytes
    }

    pub fn stats(&self) -> SketchStats {
        let mut direct = 0usize;
        let mut listed = 0usize;
        for (_, v) in self.tokens.iter() {
            match v.decode() {
                TokenRef::Direct(_) => direct += 1,
                TokenRef::List(_) => listed += 1,
                TokenRef::Absent => {}
            }
        }
        SketchStats {
            token_count: self.tokens.len(),
            list_count: self.live_lists,
            direct_count: direct,
            dedup_ratio: if listed == 0 {
                0.0
            } else {
                1.0 - self.live_lists as f64 / listed as f64
            },
        }
    }

    /// Longest probe displacement in the lookup map.
    pub fn lookup_max_displacement(&self) -> usize {
        self.lookup.max_displacement()
    }

    /// Full structural check: dedup, reference counts, handle liveness and
    /// the lookup-map probe invariant. Returns a description of the first
    /// violation.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        let mut refs = vec![0u32; self.arena.len()];
        for (fp, v) in self.tokens.iter() {
            match v.decode() {
                TokenRef::List(h) => match self.list_by_handle(h) {
                    Some(_) => refs[h as usize] += 1,
                    None => return Err(format!("{fp:?} references dead list {h}")),
                },
                TokenRef::Direct(p) if p.0 as u32 >= self.config.capacity => {
                    return Err(format!("{fp:?} direct posting {p:?} out of range"))
                }
                _ => {}
            }
        }
        let mut live = 0;
        for (h, list) in self.lists() {
            live += 1;
            if list.token_count != refs[h as usize] {
                return Err(format!(
                    "list {h}: token_count {} but {} references",
                    list.token_count, refs[h as usize]
                ));
            }
            if list.len() < 2 {
                return Err(format!("list {h} has {} postings", list.len()));
            }
            if list.postings_hash() != postings_hash(list.iter()) {
                return Err(format!("list {h}: stale postings hash"));
            }
            if self.lookup.find(list.postings_hash(), |c| c == h).is_none() {
                return Err(format!("list {h} unreachable in lookup map"));
            }
        }
        if live != self.live_lists || live != self.lookup.len() {
            return Err(format!(
                "{live} live lists, counter {}, lookup map {}",
                self.live_lists,
                self.lookup.len()
            ));
        }
        let mut seen = std::collections::HashMap::new();
        for (h, list) in self.lists() {
            if let Some(other) = seen.insert(list.to_vec(), h) {
                return Err(format!("lists {other} and {h} hold the same postings"));
            }
        }
        if !self.lookup.probe_invariant_holds() {
            return Err("lookup map probe invariant broken".into());
        }
        Ok(())
    }
}

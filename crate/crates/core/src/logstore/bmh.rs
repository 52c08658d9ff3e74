//! ASCII case-insensitive Boyer–Moore–Horspool search.

#[derive(Clone, Debug)]
pub struct Finder {
    needle: Vec<u8>,
    shift: [usize; 256],
}

impl Finder {
    /// `needle` is matched ignoring ASCII case.
    pub fn new(needle: &[u8]) -> Self {
        let needle = needle.to_ascii_lowercase();
        let m = needle.len();
        let mut shift = [m.max(1); 256];
        if m > 0 {
            for (i, &b) in needle[..m - 1].iter().enumerate() {
                shift[b as usize] = m - 1 - i;
                shift[b.to_ascii_uppercase() as usize] = m - 1 - i;
            }
        }
        Finder { needle, shift }
    }

    pub fn needle(&self) -> &[u8] {
        &self.needle
    }

    /// First match starting at or after `from`.
    pub fn find(&self, hay: &[u8], from: usize) -> Option<usize> {
        let m = self.needle.len();
        if m == 0 {
            return (from <= hay.len()).then_some(from);
        }
        let last = m - 1;
        let mut at = from;
        while at + m <= hay.len() {
            let tail = hay[at + last];
            if tail.to_ascii_lowercase() == self.needle[last]
                && hay[at..at + last]
                    .iter()
                    .zip(&self.needle[..last])
                    .all(|(h, n)| h.to_ascii_lowercase() == *n)
            {
                return Some(at);
            }
            at += self.shift[tail as usize];
        }
        None
    }

    pub fn is_match(&self, hay: &[u8]) -> bool {
        self.find(hay, 0).is_some()
    }
}

//! Bitmask helpers. Bit `i - 1` stands for location `i`.

use std::cmp::Ordering;

/// Iterates the 1-based locations of a mask in ascending order.
pub fn locations(mask: u64) -> impl Iterator<Item = usize> {
    let mut rest = mask;
    std::iter::from_fn(move || {
        if rest == 0 {
            return None;
        }
        let i = rest.trailing_zeros() as usize;
        rest &= rest - 1;
        Some(i + 1)
    })
}

/// Lexicographic order of the ascending location lists.
pub fn lex_cmp(a: u64, b: u64) -> Ordering {
    let diff = a ^ b;
    if diff == 0 {
        return Ordering::Equal;
    }
    let low = diff & diff.wrapping_neg();
    // The list holding the lowest differing location is smaller, unless the
    // other list ends exactly there (it is then a proper prefix).
    let below = low - 1;
    let (a_rest, b_rest) = (a & !below, b & !below);
    if a & low != 0 {
        if b_rest == 0 {
            Ordering::Greater
        } else {
            Ordering::Less
        }
    } else if a_rest == 0 {
        Ordering::Less
    } else {
        Ordering::Greater
    }
}

/// Ordering used to break ties between subsets of equal value: larger sets
/// first, then lexicographically smaller location lists.
pub fn tie_cmp(a: u64, b: u64) -> Ordering {
    b.count_ones()
        .cmp(&a.count_ones())
        .then_with(|| lex_cmp(a, b))
}

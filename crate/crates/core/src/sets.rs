//! Bitset newtypes for job-type and worker-type sets.

use std::fmt;

use serde::{Serialize, Serializer};

macro_rules! bitset {
    ($name:ident) => {
        #[derive(Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
        pub struct $name(pub u64);

        impl $name {
            pub const EMPTY: $name = $name(0);

            #[inline]
            pub fn contains(self, k: usize) -> bool {
                self.0 >> k & 1 == 1
            }

            #[inline]
            pub fn insert(&mut self, k: usize) {
                self.0 |= 1 << k;
            }

            #[inline]
            pub fn is_empty(self) -> bool {
                self.0 == 0
            }

            #[inline]
            pub fn len(self) -> usize {
                self.0.count_ones() as usize
            }

            #[inline]
            pub fn minus(self, other: $name) -> $name {
                $name(self.0 & !other.0)
            }

            #[inline]
            pub fn intersect(self, other: $name) -> $name {
                $name(self.0 & other.0)
            }

            pub fn iter(self) -> impl Iterator<Item = usize> {
                let mut bits = self.0;
                std::iter::from_fn(move || {
                    if bits == 0 {
                        None
                    } else {
                        let k = bits.trailing_zeros() as usize;
                        bits &= bits - 1;
                        Some(k)
                    }
                })
            }
        }

        impl FromIterator<usize> for $name {
            fn from_iter<T: IntoIterator<Item = usize>>(iter: T) -> Self {
                let mut s = $name::EMPTY;
                for k in iter {
                    s.insert(k);
                }
                s
            }
        }

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.debug_set().entries(self.iter()).finish()
            }
        }

        impl Serialize for $name {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.collect_seq(self.iter())
            }
        }
    };
}

bitset!(JobSet);
bitset!(TypeSet);

//! Test support: random model and store generators, and brute-force
//! oracles that share no code with the solver or the translation.

mod generate;
pub mod oracle;

pub use generate::{large_model, random_expr_model, random_model, random_store, RandomStore, SmallBounds};

/// The phone fixture used throughout the tests.
pub const M1: &str = "\
feature Phone {
  mandatory Screen
  optional GPS
}
feature Screen {
  xor { Basic, HD }
}
attribute GPS.price : int[1..3]
constraint HD => GPS
";

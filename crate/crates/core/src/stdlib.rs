//! The built-in standard library: a generic `Coin<T>` with split/join and
//! the privileged `mint`/`burn` natives that back every coin type's supply.

use std::sync::{Arc, OnceLock};

use crate::model::{FunctionRef, Package, QualifiedName};
use crate::parse::parse_unverified;

pub const STD_SOURCE: &str = r#"package std

module coin

datatype Coin<T> has store
  field value: u64
end

public fn coin_zero<T>() -> Coin<T>
  ld_const u64 0
  pack Coin<T>
  ret
end

public fn coin_value<T>(c: &Coin<T>) -> u64
  ld_param c
  unpack Coin<T>
  ret
end

public fn coin_split<T>(c: Coin<T>, amount: u64) -> (Coin<T>, Coin<T>)
  local total: u64
  ld_param c
  unpack Coin<T>
  st_loc total
  ld_param amount
  pack Coin<T>
  copy_loc total
  ld_param amount
  sub
  pack Coin<T>
  ret
end

public fn coin_join<T>(a: Coin<T>, b: Coin<T>) -> Coin<T>
  ld_param a
  unpack Coin<T>
  ld_param b
  unpack Coin<T>
  add
  pack Coin<T>
  ret
end

public native fn transfer_to_sender<T>(c: Coin<T>)
native fn mint<T>(amount: u64) -> Coin<T>
native fn burn<T>(c: Coin<T>)
"#;

pub fn std_package() -> Arc<Package> {
    static STD: OnceLock<Arc<Package>> = OnceLock::new();
    STD.get_or_init(|| {
        let pkg = parse_unverified(STD_SOURCE, vec![]).expect("standard library parses");
        crate::verify::verify_package(&pkg).expect("standard library verifies");
        Arc::new(pkg)
    })
    .clone()
}

pub fn coin_ref() -> QualifiedName {
    QualifiedName::new("coin", "Coin")
}

pub fn mint_ref() -> FunctionRef {
    QualifiedName::new("coin", "mint")
}

pub fn transfer_ref() -> FunctionRef {
    QualifiedName::new("coin", "transfer_to_sender")
}

pub fn burn_ref() -> FunctionRef {
    QualifiedName::new("coin", "burn")
}

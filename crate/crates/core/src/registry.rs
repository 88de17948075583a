//! Name-keyed registry of interchangeable strategies.
//!
//! Consistency and assignment solvers are selected at runtime by name from a
//! [`Registry`]; each family has a `builtin_*` constructor with the stock
//! implementations registered.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("unknown {family} strategy `{name}` (known: {known})")]
pub struct UnknownStrategy {
    pub family: &'static str,
    pub name: String,
    pub known: String,
}

/// Something that can live in a [`Registry`].
pub trait Named {
    fn name(&self) -> &'static str;
}

pub struct Registry<T: ?Sized> {
    family: &'static str,
    entries: BTreeMap<&'static str, Arc<T>>,
}

impl<T: ?Sized + Named> Registry<T> {
    pub fn new(family: &'static str) -> Self {
        Self { family, entries: BTreeMap::new() }
    }

    /// Registers `strategy` under its own name, returning any entry it
    /// replaced.
    pub fn register(&mut self, strategy: Arc<T>) -> Option<Arc<T>> {
        self.entries.insert(strategy.name(), strategy)
    }

    pub fn get(&self, name: &str) -> Result<Arc<T>, UnknownStrategy> {
        self.entries.get(name).cloned().ok_or_else(|| UnknownStrategy {
            family: self.family,
            name: name.to_owned(),
            known: self.names().collect::<Vec<_>>().join(", "),
        })
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.entries.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl<T: ?Sized> fmt::Debug for Registry<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Registry")
            .field("family", &self.family)
            .field("entries", &self.entries.keys().collect::<Vec<_>>())
            .finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    trait Greeter: Named {
        fn greet(&self) -> String;
    }

    struct Hello;
    impl Named for Hello {
        fn name(&self) -> &'static str {
            "hello"
        }
    }
    impl Greeter for Hello {
        fn greet(&self) -> String {
            "hi".into()
        }
    }

    struct Loud;
    impl Named for Loud {
        fn name(&self) -> &'static str {
            "hello"
        }
    }
    impl Greeter for Loud {
        fn greet(&self) -> String {
            "HI".into()
        }
    }

    #[test]
    fn register_lookup_replace() {
        let mut reg: Registry<dyn Greeter> = Registry::new("greeter");
        assert!(reg.is_empty());
        assert!(reg.register(Arc::new(Hello)).is_none());
        assert_eq!(reg.get("hello").unwrap().greet(), "hi");
        assert!(reg.register(Arc::new(Loud)).is_some());
        assert_eq!(reg.get("hello").unwrap().greet(), "HI");
        assert_eq!(reg.len(), 1);
        let err = reg.get("nope").err().unwrap();
        assert_eq!(err.known, "hello");
        assert!(err.to_string().contains("greeter"));
    }
}

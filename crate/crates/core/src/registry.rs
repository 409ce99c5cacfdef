//! Name-keyed registries of interchangeable strategies.
//!
//! Impact formulas, noise models and bankruptcy criteria all sit behind a
//! trait and are looked up by name at runtime (CLI flags, config files).

use std::fmt;
use std::sync::Arc;

use crate::error::{CoreError, Result};

/// Common surface of every registered strategy.
pub trait Strategy: Send + Sync {
    /// Registry key, lowercase and hyphenated.
    fn name(&self) -> &'static str;
    fn description(&self) -> &'static str;
}

pub struct Registry<T: ?Sized + Strategy> {
    kind: &'static str,
    entries: Vec<Arc<T>>,
}

impl<T: ?Sized + Strategy> Registry<T> {
    pub fn new(kind: &'static str) -> Self {
        Registry {
            kind,
            entries: Vec::new(),
        }
    }

    /// Adds a strategy; a later registration under the same name replaces
    /// the earlier one.
    pub fn register(&mut self, strategy: Arc<T>) -> &mut Self {
        let name = strategy.name();
        self.entries.retain(|s| s.name() != name);
        self.entries.push(strategy);
        self
    }

    pub fn with(mut self, strategy: Arc<T>) -> Self {
        self.register(strategy);
        self
    }

    pub fn get(&self, name: &str) -> Result<Arc<T>> {
        let key = name.trim().to_ascii_lowercase().replace('_', "-");
        self.entries
            .iter()
            .find(|s| s.name() == key)
            .cloned()
            .ok_or_else(|| CoreError::UnknownStrategy {
                kind: self.kind,
                name: name.to_string(),
                available: self.names().join(", "),
            })
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.iter().map(|s| s.name()).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Arc<T>> {
        self.entries.iter()
    }

    pub fn kind(&self) -> &'static str {
        self.kind
    }
}

impl<T: ?Sized + Strategy> fmt::Debug for Registry<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Registry")
            .field("kind", &self.kind)
            .field("entries", &self.names())
            .finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    trait Greeter: Strategy {
        fn greet(&self) -> String;
    }

    struct Hello(&'static str);

    impl Strategy for Hello {
        fn name(&self) -> &'static str {
            self.0
        }
        fn description(&self) -> &'static str {
            "says hello"
        }
    }

    impl Greeter for Hello {
        fn greet(&self) -> String {
            format!("hello from {}", self.0)
        }
    }

    #[test]
    fn lookup_normalizes_names() {
        let reg: Registry<dyn Greeter> = Registry::<dyn Greeter>::new("greeter")
            .with(Arc::new(Hello("at-end")))
            .with(Arc::new(Hello("other")));
        assert_eq!(reg.get("AT_END").unwrap().greet(), "hello from at-end");
        assert_eq!(reg.names(), vec!["at-end", "other"]);
    }

    #[test]
    fn unknown_name_lists_alternatives() {
        let reg: Registry<dyn Greeter> =
            Registry::<dyn Greeter>::new("greeter").with(Arc::new(Hello("a")));
        let err = reg.get("b").err().unwrap().to_string();
        assert!(err.contains("unknown greeter `b`"), "{err}");
        assert!(err.contains("available: a"), "{err}");
    }

    #[test]
    fn re_registration_replaces() {
        let mut reg: Registry<dyn Greeter> = Registry::<dyn Greeter>::new("greeter");
        reg.register(Arc::new(Hello("a")));
        reg.register(Arc::new(Hello("a")));
        assert_eq!(reg.names().len(), 1);
    }
}

//! Types, typing contexts and type lists shared by both languages.

use std::fmt;

/// Variable names.
pub type Name = String;

/// Types of the source and target languages.
///
/// Source programs only use `Real`, binary `Prod` and `Array` of reals.
/// The target additionally uses n-ary products, arrays over ground element
/// types, function types and an abstract answer type for continuations.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Type {
    Real,
    Bool,
    Prod(Vec<Type>),
    Array(Box<Type>, usize),
    Func(Vec<Type>, Box<Type>),
    /// An opaque type such as the continuation answer type `rho`.
    Abstract(String),
}

impl Type {
    pub fn real_array(n: usize) -> Type {
        Type::Array(Box::new(Type::Real), n)
    }

    pub fn array(elem: Type, n: usize) -> Type {
        Type::Array(Box::new(elem), n)
    }

    pub fn func(args: Vec<Type>, ret: Type) -> Type {
        Type::Func(args, Box::new(ret))
    }

    /// Product of a list of types, collapsing the singleton case.
    pub fn tuple(mut ts: Vec<Type>) -> Type {
        if ts.len() == 1 {
            ts.pop().unwrap()
        } else {
            Type::Prod(ts)
        }
    }

    /// Reals, products of ground types and arrays of ground types.
    pub fn is_ground(&self) -> bool {
        match self {
            Type::Real => true,
            Type::Prod(ts) => ts.iter().all(Type::is_ground),
            Type::Array(e, _) => e.is_ground(),
            Type::Bool | Type::Func(..) | Type::Abstract(_) => false,
        }
    }

    /// Types allowed in source programs.
    pub fn is_source(&self) -> bool {
        match self {
            Type::Real => true,
            Type::Prod(ts) => ts.len() == 2 && ts.iter().all(Type::is_source),
            Type::Array(e, _) => **e == Type::Real,
            _ => false,
        }
    }

    pub fn array_size(&self) -> Option<usize> {
        match self {
            Type::Array(_, n) => Some(*n),
            _ => None,
        }
    }

    pub fn array_elem(&self) -> Option<&Type> {
        match self {
            Type::Array(e, _) => Some(e),
            _ => None,
        }
    }

    /// Number of scalar coordinates of a ground type.
    pub fn scalar_count(&self) -> usize {
        match self {
            Type::Real => 1,
            Type::Prod(ts) => ts.iter().map(Type::scalar_count).sum(),
            Type::Array(e, n) => e.scalar_count() * n,
            _ => 0,
        }
    }

    /// Compact rendering used in UNF indices, e.g. `RxR` or `R[4]`.
    pub fn compact(&self) -> String {
        match self {
            Type::Real => "R".into(),
            Type::Bool => "B".into(),
            Type::Prod(ts) if ts.is_empty() => "1".into(),
            Type::Prod(ts) => ts
                .iter()
                .map(|t| match t {
                    Type::Prod(_) | Type::Func(..) => format!("({})", t.compact()),
                    _ => t.compact(),
                })
                .collect::<Vec<_>>()
                .join("x"),
            Type::Array(e, n) => match **e {
                Type::Real => format!("R[{n}]"),
                _ => format!("({})[{n}]", e.compact()),
            },
            Type::Func(args, ret) => {
                let args: Vec<String> = args
                    .iter()
                    .map(|t| match t {
                        Type::Func(..) => format!("({})", t.compact()),
                        _ => t.compact(),
                    })
                    .collect();
                format!("{}->{}", args.join("x"), ret.compact())
            }
            Type::Abstract(s) => s.clone(),
        }
    }
}

impl fmt::Display for Type {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Type::Real => write!(f, "real"),
            Type::Bool => write!(f, "bool"),
            Type::Prod(ts) if ts.is_empty() => write!(f, "unit"),
            Type::Prod(ts) => {
                for (i, t) in ts.iter().enumerate() {
                    if i > 0 {
                        write!(f, " * ")?;
                    }
                    match t {
                        Type::Prod(inner) if !inner.is_empty() => write!(f, "({t})")?,
                        Type::Func(..) => write!(f, "({t})")?,
                        _ => write!(f, "{t}")?,
                    }
                }
                Ok(())
            }
            Type::Array(e, n) => match **e {
                Type::Real => write!(f, "real^{n}"),
                _ => write!(f, "({e})^{n}"),
            },
            Type::Func(args, ret) => {
                write!(f, "(")?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{a}")?;
                }
                write!(f, ") -> {ret}")
            }
            Type::Abstract(s) => write!(f, "{s}"),
        }
    }
}

/// Ordered typing context with unique names.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Context {
    entries: Vec<(Name, Type)>,
}

impl Context {
    pub fn new() -> Self {
        Context { entries: Vec::new() }
    }

    /// Builds a context, rejecting duplicate names.
    pub fn from_entries(entries: Vec<(Name, Type)>) -> Result<Self, Name> {
        let mut ctx = Context::new();
        for (n, t) in entries {
            if ctx.position(&n).is_some() {
                return Err(n);
            }
            ctx.entries.push((n, t));
        }
        Ok(ctx)
    }

    /// Extends the context; a shadowed name is removed from its old slot.
    pub fn extend(&self, name: &str, ty: Type) -> Context {
        let mut c = self.clone();
        c.push(name, ty);
        c
    }

    pub fn push(&mut self, name: &str, ty: Type) {
        self.entries.retain(|(n, _)| n != name);
        self.entries.push((name.to_string(), ty));
    }

    pub fn lookup(&self, name: &str) -> Option<&Type> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    /// Zero-based position of a variable.
    pub fn position(&self, name: &str) -> Option<usize> {
        self.entries.iter().position(|(n, _)| n == name)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[(Name, Type)] {
        &self.entries
    }

    pub fn names(&self) -> Vec<Name> {
        self.entries.iter().map(|(n, _)| n.clone()).collect()
    }

    pub fn types(&self) -> Vec<Type> {
        self.entries.iter().map(|(_, t)| t.clone()).collect()
    }

    /// The product of all entry types.
    pub fn tuple_type(&self) -> Type {
        Type::tuple(self.types())
    }

    pub fn is_ground(&self) -> bool {
        self.entries.iter().all(|(_, t)| t.is_ground())
    }

    /// Sub-context of the given names, in context order.
    pub fn restrict(&self, keep: &dyn Fn(&str) -> bool) -> Context {
        Context {
            entries: self
                .entries
                .iter()
                .filter(|(n, _)| keep(n))
                .cloned()
                .collect(),
        }
    }
}

impl fmt::Display for Context {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (n, t)) in self.entries.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{n}:{t}")?;
        }
        Ok(())
    }
}

/// Ordered list of types indexing UNF judgments.
pub type TypeList = Vec<Type>;

//! Flattens a Python module into the syntactic facts detection rules match on.

use std::collections::{BTreeMap, BTreeSet};

use petgraph::algo::tarjan_scc;
use petgraph::graphmap::DiGraphMap;
use rustpython_ast::{self as ast, Visitor};
use rustpython_parser::Parse;

use super::ParseError;

/// Node kinds the rule corpus can refer to.
pub const NODE_KINDS: &[&str] = &[
    "if",
    "if_exp",
    "for",
    "comprehension",
    "while",
    "break",
    "continue",
    "pass",
    "match",
    "tuple",
    "set",
    "set_comp",
    "dict",
    "dict_comp",
    "lambda",
    "class",
    "function",
];

/// A call site. `qualified` is import-resolved (`heapq.heappush`) when the
/// callee is a plain or module-qualified name; `method` is the attribute
/// name for calls of the form `receiver.method(...)`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct CallSite {
    pub qualified: Option<String>,
    pub method: Option<String>,
    pub arity: usize,
}

#[derive(Debug, Default, Clone)]
pub struct SyntaxFacts {
    pub nodes: BTreeSet<&'static str>,
    pub calls: BTreeSet<CallSite>,
    /// User-defined function names, any nesting depth.
    pub functions: BTreeSet<String>,
    /// Caller -> callee name edges, recorded only inside function bodies.
    pub call_edges: BTreeSet<(String, String)>,
}

impl SyntaxFacts {
    pub fn from_source(source: &str) -> Result<SyntaxFacts, ParseError> {
        let suite = parse_module(source)?;
        let mut collector = Collector::default();
        for stmt in suite {
            collector.visit_stmt(stmt);
        }
        Ok(collector.facts)
    }

    /// Whether the intra-file call graph has a cycle through user functions,
    /// including a function calling itself.
    pub fn has_recursive_cycle(&self) -> bool {
        let mut graph: DiGraphMap<&str, ()> = DiGraphMap::new();
        for f in &self.functions {
            graph.add_node(f.as_str());
        }
        for (caller, callee) in &self.call_edges {
            if self.functions.contains(caller) && self.functions.contains(callee) {
                if caller == callee {
                    return true;
                }
                graph.add_edge(caller.as_str(), callee.as_str(), ());
            }
        }
        tarjan_scc(&graph).iter().any(|scc| scc.len() > 1)
    }
}

pub(crate) fn parse_module(source: &str) -> Result<ast::Suite, ParseError> {
    ast::Suite::parse(source, "<solution>").map_err(|err| ParseError {
        offset: u32::from(err.offset) as usize,
        message: err.error.to_string(),
    })
}

fn root_name(expr: &ast::Expr) -> Option<&str> {
    match expr {
        ast::Expr::Name(name) => Some(name.id.as_str()),
        ast::Expr::Attribute(attr) => root_name(&attr.value),
        _ => None,
    }
}

#[derive(Default)]
struct Collector {
    facts: SyntaxFacts,
    /// local name -> fully qualified import path
    aliases: BTreeMap<String, String>,
    scope: Vec<String>,
}

impl Collector {
    fn mark(&mut self, kind: &'static str) {
        debug_assert!(NODE_KINDS.contains(&kind));
        self.facts.nodes.insert(kind);
    }

    fn dotted(&self, expr: &ast::Expr) -> Option<String> {
        match expr {
            ast::Expr::Name(name) => {
                let id = name.id.as_str();
                Some(self.aliases.get(id).cloned().unwrap_or_else(|| id.to_string()))
            }
            ast::Expr::Attribute(attr) => {
                let base = self.dotted(&attr.value)?;
                Some(format!("{base}.{}", attr.attr.as_str()))
            }
            _ => None,
        }
    }

    fn record_call(&mut self, call: &ast::ExprCall) {
        let arity = call.args.len() + call.keywords.len();
        let (qualified, method, local) = match call.func.as_ref() {
            ast::Expr::Name(name) => (self.dotted(&call.func), None, Some(name.id.to_string())),
            ast::Expr::Attribute(attr) => {
                let method = attr.attr.to_string();
                // Module-qualified only when the receiver resolves to an import.
                let qualified = root_name(&attr.value)
                    .filter(|root| self.aliases.contains_key(*root))
                    .and_then(|_| self.dotted(&call.func));
                let local = match attr.value.as_ref() {
                    ast::Expr::Name(base) if matches!(base.id.as_str(), "self" | "cls") => Some(method.clone()),
                    _ => None,
                };
                (qualified, Some(method), local)
            }
            _ => (None, None, None),
        };
        if let (Some(caller), Some(callee)) = (self.scope.last(), local) {
            self.facts.call_edges.insert((caller.clone(), callee));
        }
        self.facts.calls.insert(CallSite {
            qualified,
            method,
            arity,
        });
    }

    fn enter_function(&mut self, name: &str) {
        self.mark("function");
        self.facts.functions.insert(name.to_string());
        self.scope.push(name.to_string());
    }
}

impl Visitor for Collector {
    fn visit_stmt_function_def(&mut self, node: ast::StmtFunctionDef) {
        self.enter_function(node.name.as_str());
        self.generic_visit_stmt_function_def(node);
        self.scope.pop();
    }

    fn visit_stmt_async_function_def(&mut self, node: ast::StmtAsyncFunctionDef) {
        self.enter_function(node.name.as_str());
        self.generic_visit_stmt_async_function_def(node);
        self.scope.pop();
    }

    fn visit_stmt_class_def(&mut self, node: ast::StmtClassDef) {
        self.mark("class");
        self.generic_visit_stmt_class_def(node);
    }

    fn visit_stmt_import(&mut self, node: ast::StmtImport) {
        for alias in &node.names {
            let full = alias.name.to_string();
            let local = match &alias.asname {
                Some(asname) => asname.to_string(),
                None => full.split('.').next().unwrap_or(&full).to_string(),
            };
            let target = if alias.asname.is_some() { full.clone() } else { local.clone() };
            self.aliases.insert(local, target);
        }
    }

    fn visit_stmt_import_from(&mut self, node: ast::StmtImportFrom) {
        let module = node.module.as_ref().map(|m| m.to_string()).unwrap_or_default();
        for alias in &node.names {
            let name = alias.name.to_string();
            if name == "*" {
                continue;
            }
            let local = alias.asname.as_ref().map(|a| a.to_string()).unwrap_or_else(|| name.clone());
            let full = if module.is_empty() { name } else { format!("{module}.{name}") };
            self.aliases.insert(local, full);
        }
    }

    fn visit_stmt_if(&mut self, node: ast::StmtIf) {
        self.mark("if");
        self.generic_visit_stmt_if(node);
    }

    fn visit_stmt_for(&mut self, node: ast::StmtFor) {
        self.mark("for");
        self.generic_visit_stmt_for(node);
    }

    fn visit_stmt_async_for(&mut self, node: ast::StmtAsyncFor) {
        self.mark("for");
        self.generic_visit_stmt_async_for(node);
    }

    fn visit_stmt_while(&mut self, node: ast::StmtWhile) {
        self.mark("while");
        self.generic_visit_stmt_while(node);
    }

    fn visit_stmt_break(&mut self, _node: ast::StmtBreak) {
        self.mark("break");
    }

    fn visit_stmt_continue(&mut self, _node: ast::StmtContinue) {
        self.mark("continue");
    }

    fn visit_stmt_pass(&mut self, _node: ast::StmtPass) {
        self.mark("pass");
    }

    fn visit_stmt_match(&mut self, node: ast::StmtMatch) {
        self.mark("match");
        self.generic_visit_stmt_match(node);
    }

    fn visit_match_case(&mut self, node: ast::MatchCase) {
        if let Some(guard) = node.guard {
            self.visit_expr(*guard);
        }
        for stmt in node.body {
            self.visit_stmt(stmt);
        }
    }

    fn visit_expr_if_exp(&mut self, node: ast::ExprIfExp) {
        self.mark("if_exp");
        self.generic_visit_expr_if_exp(node);
    }

    fn visit_expr_tuple(&mut self, node: ast::ExprTuple) {
        self.mark("tuple");
        self.generic_visit_expr_tuple(node);
    }

    fn visit_expr_set(&mut self, node: ast::ExprSet) {
        self.mark("set");
        self.generic_visit_expr_set(node);
    }

    fn visit_expr_set_comp(&mut self, node: ast::ExprSetComp) {
        self.mark("set_comp");
        self.generic_visit_expr_set_comp(node);
    }

    fn visit_expr_dict(&mut self, node: ast::ExprDict) {
        self.mark("dict");
        self.generic_visit_expr_dict(node);
    }

    fn visit_expr_dict_comp(&mut self, node: ast::ExprDictComp) {
        self.mark("dict_comp");
        self.generic_visit_expr_dict_comp(node);
    }

    fn visit_expr_lambda(&mut self, node: ast::ExprLambda) {
        self.mark("lambda");
        self.generic_visit_expr_lambda(node);
    }

    fn visit_expr_call(&mut self, node: ast::ExprCall) {
        self.record_call(&node);
        self.generic_visit_expr_call(node);
    }

    // The generated defaults below do not descend into children.

    fn visit_comprehension(&mut self, node: ast::Comprehension) {
        self.mark("comprehension");
        self.visit_expr(node.target);
        self.visit_expr(node.iter);
        for cond in node.ifs {
            self.visit_expr(cond);
        }
    }

    fn visit_arguments(&mut self, node: ast::Arguments) {
        for arg in node.posonlyargs.into_iter().chain(node.args).chain(node.kwonlyargs) {
            if let Some(default) = arg.default {
                self.visit_expr(*default);
            }
        }
    }

    fn visit_keyword(&mut self, node: ast::Keyword) {
        self.visit_expr(node.value);
    }

    fn visit_withitem(&mut self, node: ast::WithItem) {
        self.visit_expr(node.context_expr);
        if let Some(vars) = node.optional_vars {
            self.visit_expr(*vars);
        }
    }
}

"""Loop-nest DSL front end: AST, parser and pretty-printer."""
from .nodes import *  # noqa: F401,F403
from .nodes import (ArrayDecl, ArrayRef, Assign, Barrier, BinOp, CallStmt, ChunkBuild,
                    ChunkFlatten, ChunkRebuild, FloatLit, ForLoop, Func, IntLit, Neg,
                    ParamDecl, Program, Range, Region, SourceLocation, TaskCall, TaskDef,
                    TaskParam, Var, WriteBack)
from .parser import (PRAGMA, DslError, DslSyntaxError, DuplicateDeclaration, RankMismatch, parse_statement,
                     UndeclaredIdentifier, parse, tokenize)
from .printer import format_expr, format_region, format_stmts, pretty_print

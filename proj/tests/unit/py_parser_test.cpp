#include <gtest/gtest.h>

#include <json.hpp>

#include "dlrepro/py/parser.hpp"
#include "dlrepro/py/scope.hpp"
#include "test_support.hpp"

using namespace dlrepro;

TEST(PyParser, MatchesCpythonDiagnostics) {
  auto cases = nlohmann::json::parse(test::read_fixture("syntax/cpython_cases.json"));
  int checked = 0;
  for (const auto& c : cases["cases"]) {
    auto src = c["source"].get<std::string>();
    auto r = py::parse(src);
    ASSERT_EQ(r.ok, c["ok"].get<bool>()) << src;
    if (!r.ok) {
      EXPECT_EQ(r.error.kind, c["kind"].get<std::string>()) << src;
      EXPECT_EQ(r.error.line, c["line"].get<int>()) << src;
      EXPECT_EQ(r.error.message, c["message"].get<std::string>()) << src;
    }
    ++checked;
  }
  EXPECT_GT(checked, 100);
}

TEST(PyParser, StatementSpans) {
  auto r = py::parse("import os\n\ndef f(a, b=1):\n    return a + b\n\nclass C:\n    x = 1\n\n    def m(self):\n        pass\n");
  ASSERT_TRUE(r.ok);
  auto body = r.module->all(py::Role::Body);
  ASSERT_EQ(body.size(), 3u);
  EXPECT_EQ(body[1]->kind, py::NodeKind::FunctionDef);
  EXPECT_EQ(body[1]->line, 3);
  EXPECT_EQ(body[1]->end_line, 4);
  EXPECT_EQ(body[2]->kind, py::NodeKind::ClassDef);
  EXPECT_EQ(body[2]->end_line, 10);
}

TEST(PyScope, UndefinedNamesAndArity) {
  auto r = py::parse(
      "import torch\n"
      "def train(model, lr):\n"
      "    opt = torch.optim.SGD(model.parameters(), lr=lr)\n"
      "    return optimiser\n"
      "train(1, 2, 3)\n"
      "print(len([1]))\n");
  ASSERT_TRUE(r.ok);
  auto syms = py::analyze(*r.module);
  ASSERT_EQ(syms.undefined.size(), 1u);
  EXPECT_EQ(syms.undefined[0].name, "optimiser");
  EXPECT_EQ(syms.undefined[0].line, 4);
  ASSERT_EQ(syms.arity.size(), 1u);
  EXPECT_EQ(syms.arity[0].problem, py::ArityProblem::TooManyPositional);
  EXPECT_EQ(syms.arity[0].function, "train");
  ASSERT_EQ(syms.imports.size(), 1u);
  EXPECT_EQ(syms.imports[0].module, "torch");
}

TEST(PyScope, ComprehensionAndClassScopes) {
  auto r = py::parse(
      "class A:\n"
      "    k = 3\n"
      "    def f(self):\n"
      "        return k\n"
      "ys = [y * 2 for y in range(3)]\n"
      "z = y\n");
  ASSERT_TRUE(r.ok);
  auto syms = py::analyze(*r.module);
  std::vector<std::string> names;
  for (auto& u : syms.undefined) names.push_back(u.name);
  EXPECT_EQ(names, (std::vector<std::string>{"k", "y"}));
}

TEST(PyScope, StdlibLookup) {
  EXPECT_TRUE(py::is_stdlib_module("os.path"));
  EXPECT_TRUE(py::is_stdlib_module("collections"));
  EXPECT_FALSE(py::is_stdlib_module("torch"));
  EXPECT_TRUE(py::is_builtin("len"));
  EXPECT_FALSE(py::is_builtin("torch"));
}

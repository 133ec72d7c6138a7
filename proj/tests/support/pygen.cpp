#include "pygen.hpp"

namespace dlrepro::test {

namespace {
std::string pad(int n) { return std::string(static_cast<std::size_t>(n), ' '); }
}  // namespace

std::string PyGen::ident() {
  static const char* words[] = {"model", "loss", "batch", "optimizer", "x", "y", "lr", "step", "hidden", "logits"};
  return std::string(words[uniform(0, 9)]) + "_" + std::to_string(counter_++);
}

std::string PyGen::statement_block(int indent, int lines, int depth) {
  std::string out = pad(indent) + ident() + " = 0\n";
  int written = 1;
  while (written < lines) {
    int left = lines - written;
    int choice = uniform(0, 9);
    if (choice == 0 && depth < 3 && left >= 3) {
      int inner = uniform(1, std::min(left - 1, 12));
      out += pad(indent) + "for " + ident() + " in range(" + std::to_string(uniform(1, 9)) + "):\n";
      out += statement_block(indent + 4, inner, depth + 1);
      written += inner + 1;
    } else if (choice == 1 && depth < 3 && left >= 4) {
      int inner = uniform(1, std::min(left - 3, 8));
      out += pad(indent) + "if " + ident() + " > 0:\n";
      out += statement_block(indent + 4, inner, depth + 1);
      out += pad(indent) + "else:\n" + pad(indent + 4) + "pass\n";
      written += inner + 3;
    } else if (choice == 2) {
      out += pad(indent) + "# " + ident() + "\n";
      ++written;
    } else if (choice == 3 && left >= 3) {
      out += pad(indent) + ident() + " = foo(\n" + pad(indent + 4) + "1, 2,\n" + pad(indent) + ")\n";
      written += 3;
    } else if (choice == 4) {
      out += "\n";
      ++written;
    } else {
      out += pad(indent) + ident() + " = model.forward(" + ident() + ") * 0.5\n";
      ++written;
    }
  }
  return out;
}

std::string PyGen::function(const std::string& name, int indent, int body_lines) {
  std::string out;
  if (uniform(0, 4) == 0) out += pad(indent) + "@staticmethod\n";
  out += pad(indent) + "def " + name + "(self, a, b=1):\n";
  out += pad(indent + 4) + "a = a + b\n";
  out += statement_block(indent + 4, std::max(0, body_lines - 2), 0);
  out += pad(indent + 4) + "return a\n";
  return out;
}

std::string PyGen::klass(const std::string& name, int methods, int method_lines) {
  std::string out = "class " + name + "(Base):\n    \"\"\"Doc.\"\"\"\n    scale = 2\n\n";
  for (int i = 0; i < methods; ++i) {
    out += function("m" + std::to_string(i), 4, method_lines);
    if (uniform(0, 2) == 0) out += "\n    attr_" + std::to_string(i) + " = " + std::to_string(i) + "\n";
    out += "\n";
  }
  return out;
}

std::string PyGen::module(int top_level_items) {
  std::string out;
  if (uniform(0, 1)) out += "\"\"\"Module docstring.\"\"\"\n";
  out += "import torch\nfrom torch import nn\n\n";
  for (int i = 0; i < top_level_items; ++i) {
    switch (uniform(0, 3)) {
      case 0: out += function("f" + std::to_string(i), 0, uniform(1, 200)); break;
      case 1: out += klass("C" + std::to_string(i), uniform(0, 5), uniform(2, 90)); break;
      case 2: out += statement_block(0, uniform(1, 40), 0); break;
      default: out += "\n# section " + std::to_string(i) + "\n\n"; break;
    }
  }
  if (uniform(0, 3) == 0 && !out.empty() && out.back() == '\n') out.pop_back();
  return out;
}

std::string PyGen::garbage(int lines) {
  std::string out;
  for (int i = 0; i < lines; ++i) out += (i == lines / 2 ? "def broken(:\n" : "x = " + std::to_string(i) + "\n");
  return out;
}

}  // namespace dlrepro::test

#include <algorithm>
#include <bit>
#include <charconv>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <set>

#include "coldcarve/carver.hpp"
#include "coldcarve/error.hpp"
#include "coldcarve/ir_xml.hpp"

namespace coldcarve {

namespace {

// ---------------------------------------------------------------------------
// Line templates. '#' numeric slot, '%' decimal slot, '*' free text, '@' enum
// value, ' ' any whitespace run; everything else is literal markup.

enum class El : std::uint8_t { Lit, Space, Num, Dec, Text, Enum };

bool is_slot(El k) { return k == El::Num || k == El::Dec || k == El::Text || k == El::Enum; }

struct Element {
  El kind;
  char ch;
  int token;
};

struct TokenDef {
  El kind;
  std::string canonical;
};

struct Template {
  std::string label;
  std::vector<Element> elems;
  std::vector<TokenDef> tokens;
  std::size_t literal_len = 0;
};

bool word_char(char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_' || c == '-';
}

Template make_template(std::string_view pattern) {
  Template t;
  t.label = std::string(pattern);
  for (char c : pattern) {
    El kind = El::Lit;
    switch (c) {
      case '#': kind = El::Num; break;
      case '%': kind = El::Dec; break;
      case '*': kind = El::Text; break;
      case '@': kind = El::Enum; break;
      case ' ': kind = El::Space; break;
      default: break;
    }
    bool extend = false;
    if (kind == El::Lit && !t.elems.empty()) {
      const Element& prev = t.elems.back();
      extend = prev.kind == El::Lit && word_char(prev.ch) == word_char(c);
    }
    if (!extend) t.tokens.push_back({kind, ""});
    if (kind == El::Lit || kind == El::Space) {
      t.tokens.back().canonical += c;
      ++t.literal_len;
    }
    t.elems.push_back({kind, c, static_cast<int>(t.tokens.size()) - 1});
  }
  return t;
}

struct Templates {
  Template net_open = make_template("<net name=\"*\" version=\"#\">");
  Template net_close = make_template("</net>");
  Template layers_open = make_template("<layers>");
  Template layers_close = make_template("</layers>");
  Template layer_open = make_template("<layer id=\"#\" name=\"*\" type=\"@\">");
  Template layer_close = make_template("</layer>");
  Template input_open = make_template("<input>");
  Template input_close = make_template("</input>");
  Template output_open = make_template("<output>");
  Template output_close = make_template("</output>");
  Template port_open = make_template("<port id=\"#\" precision=\"@\">");
  Template port_close = make_template("</port>");
  Template dim = make_template("<dim>#</dim>");
  Template edges_open = make_template("<edges>");
  Template edges_close = make_template("</edges>");
  Template edge = make_template("<edge from-layer=\"#\" from-port=\"#\" to-layer=\"#\" to-port=\"#\"/>");
  Template cli_open = make_template("<cli_parameters>");
  Template cli_close = make_template("</cli_parameters>");
  std::map<LayerKind, Template> data;

  Templates() {
    for (LayerKind k : kAllLayerKinds) {
      const auto attrs = data_attributes(k);
      if (attrs.empty()) continue;
      std::string p = "<data";
      for (const auto& a : attrs) {
        p += " " + std::string(a.name) + "=\"";
        for (int i = 0; i < a.arity; ++i) p += i ? ",#" : (a.decimal ? "%" : "#");
        p += "\"";
      }
      p += "/>";
      data.emplace(k, make_template(p));
    }
  }
};

const Templates& templates() {
  static const Templates t;
  return t;
}

// ---------------------------------------------------------------------------
// Alignment of one template against the byte stream: a Levenshtein DP whose
// slot elements loop over the characters they absorb. The template must be
// consumed completely; text after its end is left for the next line.

constexpr int kInf = std::numeric_limits<int>::max() / 4;
constexpr int kCase = 1;
constexpr int kSub = 10;
constexpr int kIndel = 11;
constexpr std::size_t kMaxTrailing = 8;

bool blank(std::uint8_t b) { return b <= 0x20; }
bool digit(std::uint8_t b) { return b >= '0' && b <= '9'; }

char fold(char c) { return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c; }

int literal_cost(char want, std::uint8_t got) {
  if (static_cast<std::uint8_t>(want) == got) return 0;
  if (fold(want) == fold(static_cast<char>(got)) && word_char(want)) return kCase;
  return kSub;
}

int slot_cost(El kind, std::uint8_t b) {
  switch (kind) {
    case El::Num: return digit(b) ? 0 : kSub;
    case El::Dec: return (digit(b) || b == '.' || b == 'e' || b == '-' || b == '+') ? 0 : kSub;
    case El::Text:
    case El::Enum: return (b == '"' || b == '<' || b == '>' || b == '\n') ? kSub : 0;
    default: return kSub;
  }
}

int empty_slot_cost(El kind) { return kind == El::Text ? 0 : kIndel; }

struct SlotText {
  std::string raw;
  std::size_t offset = 0;
};

struct Alignment {
  const Template* tmpl = nullptr;
  int cost = kInf;
  std::size_t begin = 0;
  std::size_t end = 0;
  std::vector<SlotText> slots;
  std::vector<int> token_edits;
  std::vector<std::pair<std::size_t, std::size_t>> token_span;  // absolute [first, last+1)
  int max_edits = 0;

  bool found() const { return cost < kInf; }
  bool within(std::size_t budget) const { return found() && static_cast<std::size_t>(max_edits) <= budget; }
};

enum Move : std::uint8_t { kNone, kDiag, kDown, kLeft };

Alignment align(const Template& t, std::span<const std::uint8_t> img, std::size_t at) {
  const std::size_t m = t.elems.size();
  const std::size_t w = std::min(img.size() - std::min(at, img.size()), t.literal_len + 192);
  const auto x = img.subspan(at, w);
  const std::size_t cols = w + 1;
  std::vector<int> cost((m + 1) * cols, kInf);
  std::vector<Move> move((m + 1) * cols, kNone);
  auto C = [&](std::size_t r, std::size_t j) -> int& { return cost[r * cols + j]; };
  auto M = [&](std::size_t r, std::size_t j) -> Move& { return move[r * cols + j]; };

  auto left_cost = [&](std::size_t r, std::uint8_t b) -> int {
    int best = kInf;
    if (r >= 1 && is_slot(t.elems[r - 1].kind)) best = slot_cost(t.elems[r - 1].kind, b);
    if (r >= 1 && t.elems[r - 1].kind == El::Space && blank(b)) best = 0;
    const bool insert_ok = r < m && !is_slot(t.elems[r].kind) && (r == 0 || !is_slot(t.elems[r - 1].kind));
    if (insert_ok) best = std::min(best, (r == 0 && blank(b)) ? 0 : kIndel);
    return best;
  };

  C(0, 0) = 0;
  for (std::size_t r = 0; r <= m; ++r) {
    for (std::size_t j = 1; j <= w; ++j) {
      if (C(r, j - 1) >= kInf) continue;
      const int lc = left_cost(r, x[j - 1]);
      if (lc < kInf && C(r, j - 1) + lc < C(r, j)) {
        C(r, j) = C(r, j - 1) + lc;
        M(r, j) = kLeft;
      }
    }
    if (r == m) break;
    const Element& e = t.elems[r];
    for (std::size_t j = 0; j <= w; ++j) {
      if (C(r, j) >= kInf) continue;
      const int down = is_slot(e.kind) ? empty_slot_cost(e.kind) : kIndel;
      if (C(r, j) + down < C(r + 1, j)) {
        C(r + 1, j) = C(r, j) + down;
        M(r + 1, j) = kDown;
      }
      if (j < w) {
        const std::uint8_t b = x[j];
        const int diag = is_slot(e.kind) ? slot_cost(e.kind, b)
                         : e.kind == El::Space ? (blank(b) ? 0 : kSub)
                                               : literal_cost(e.ch, b);
        if (C(r, j) + diag < C(r + 1, j + 1)) {
          C(r + 1, j + 1) = C(r, j) + diag;
          M(r + 1, j + 1) = kDiag;
        }
      }
    }
  }

  Alignment a;
  a.tmpl = &t;
  a.begin = at;
  std::size_t best_j = 0;
  for (std::size_t j = 0; j <= w; ++j)
    if (C(m, j) < a.cost) {
      a.cost = C(m, j);
      best_j = j;
    }
  if (!a.found()) return a;
  a.end = at + best_j;

  // Traceback: per-token edit counts, raw spans and slot contents.
  a.token_edits.assign(t.tokens.size(), 0);
  a.token_span.assign(t.tokens.size(), {kInf, 0});
  std::vector<std::pair<std::size_t, std::size_t>> slot_span(m, {kInf, 0});
  auto touch = [&](int token, std::size_t j) {
    auto& s = a.token_span[static_cast<std::size_t>(token)];
    s.first = std::min(s.first, at + j);
    s.second = std::max(s.second, at + j + 1);
  };
  std::size_t r = m, j = best_j;
  while (r > 0 || j > 0) {
    const Move mv = M(r, j);
    if (mv == kDiag) {
      const Element& e = t.elems[r - 1];
      touch(e.token, j - 1);
      if (is_slot(e.kind)) {
        slot_span[r - 1].first = std::min(slot_span[r - 1].first, j - 1);
        slot_span[r - 1].second = std::max(slot_span[r - 1].second, j);
      } else if (C(r, j) - C(r - 1, j - 1) >= kSub) {
        ++a.token_edits[static_cast<std::size_t>(e.token)];
      }
      --r;
      --j;
    } else if (mv == kDown) {
      const Element& e = t.elems[r - 1];
      if (!is_slot(e.kind)) ++a.token_edits[static_cast<std::size_t>(e.token)];
      --r;
    } else if (mv == kLeft) {
      const std::uint8_t b = x[j - 1];
      if (r >= 1 && is_slot(t.elems[r - 1].kind) && C(r, j) - C(r, j - 1) == slot_cost(t.elems[r - 1].kind, b)) {
        touch(t.elems[r - 1].token, j - 1);
        slot_span[r - 1].first = std::min(slot_span[r - 1].first, j - 1);
        slot_span[r - 1].second = std::max(slot_span[r - 1].second, j);
      } else if (r >= 1 && t.elems[r - 1].kind == El::Space && blank(b) && C(r, j) == C(r, j - 1)) {
        touch(t.elems[r - 1].token, j - 1);
      } else if (r == 0 && blank(b)) {
        // free leading whitespace
      } else {
        const int token = t.elems[r < m ? r : r - 1].token;
        touch(token, j - 1);
        ++a.token_edits[static_cast<std::size_t>(token)];
      }
      --j;
    } else {
      break;
    }
  }
  for (std::size_t i = 0; i < m; ++i) {
    if (!is_slot(t.elems[i].kind)) continue;
    SlotText s;
    if (slot_span[i].first < kInf) {
      s.offset = at + slot_span[i].first;
      s.raw.assign(x.begin() + static_cast<std::ptrdiff_t>(slot_span[i].first),
                   x.begin() + static_cast<std::ptrdiff_t>(slot_span[i].second));
    } else {
      s.offset = a.end;
    }
    a.slots.push_back(std::move(s));
  }
  // Markup lines end at whitespace or the next tag. Bytes glued to the match
  // count as insertions on the final token; otherwise a short closing tag
  // would happily match the first letters of a longer, damaged line.
  std::size_t tail = a.end;
  while (tail < img.size() && tail - a.end < kMaxTrailing && !blank(img[tail]) && img[tail] != '<') ++tail;
  if (tail > a.end) {
    const int extra = static_cast<int>(tail - a.end);
    a.cost += extra * kIndel;
    a.token_edits.back() += extra;
    if (tail - a.end == kMaxTrailing) a.token_edits.back() += kInf / 8;  // runaway junk: never within budget
    a.end = tail;
  }
  for (std::size_t k = 0; k < t.tokens.size(); ++k)
    if (!is_slot(t.tokens[k].kind)) a.max_edits = std::max(a.max_edits, a.token_edits[k]);
  return a;
}

// ---------------------------------------------------------------------------
// Numeric helpers.

char nearest_digit(std::uint8_t b) {
  char best = '0';
  int best_d = 99;
  for (char d = '0'; d <= '9'; ++d) {
    const int dist = std::popcount(static_cast<unsigned>(b ^ static_cast<std::uint8_t>(d)));
    if (dist < best_d) {
      best_d = dist;
      best = d;
    }
  }
  return best;
}

std::optional<std::size_t> lenient_count(std::string_view raw) {
  if (raw.empty() || raw.size() > 9) return std::nullopt;
  std::string digits;
  for (char c : raw) digits += digit(static_cast<std::uint8_t>(c)) ? c : nearest_digit(static_cast<std::uint8_t>(c));
  std::size_t v = 0;
  std::from_chars(digits.data(), digits.data() + digits.size(), v);
  return v;
}

// Bit-level distance between the canonical rendering and what was read.
int render_cost(std::string_view canonical, std::string_view raw) {
  int c = 16 * static_cast<int>(canonical.size() > raw.size() ? canonical.size() - raw.size() : raw.size() - canonical.size());
  for (std::size_t i = 0; i < std::min(canonical.size(), raw.size()); ++i)
    c += std::popcount(static_cast<unsigned>(static_cast<std::uint8_t>(canonical[i]) ^ static_cast<std::uint8_t>(raw[i])));
  return c;
}

std::size_t char_edits(std::string_view canonical, std::string_view raw) {
  std::size_t e = canonical.size() > raw.size() ? canonical.size() - raw.size() : raw.size() - canonical.size();
  for (std::size_t i = 0; i < std::min(canonical.size(), raw.size()); ++i) e += canonical[i] != raw[i];
  return e;
}

std::string unescape(std::string_view s) {
  static const std::pair<std::string_view, char> kEntities[] = {
      {"&amp;", '&'}, {"&lt;", '<'}, {"&gt;", '>'}, {"&quot;", '"'}, {"&apos;", '\''}};
  std::string out;
  for (std::size_t i = 0; i < s.size();) {
    bool replaced = false;
    if (s[i] == '&')
      for (const auto& [entity, ch] : kEntities)
        if (s.substr(i, entity.size()) == entity) {
          out += ch;
          i += entity.size();
          replaced = true;
          break;
        }
    if (!replaced) out += s[i++];
  }
  return out;
}

std::string printable_name(std::string_view raw, std::string_view fallback) {
  std::string out = unescape(raw);
  for (char& c : out)
    if (static_cast<unsigned char>(c) < 0x20 || static_cast<unsigned char>(c) > 0x7E) c = '_';
  return out.empty() ? std::string(fallback) : out;
}

// ---------------------------------------------------------------------------
// What the grammar walk extracts for one layer.

struct RawLayer {
  LayerKind kind = LayerKind::Input;
  SlotText id, name, type;
  std::vector<SlotText> data;
  std::vector<SlotText> port_ids, precisions;  // input port first when present
  std::vector<SlotText> in_dims, out_dims;
};

struct RawNet {
  SlotText name, version;
  std::vector<RawLayer> layers;
  std::vector<std::vector<SlotText>> edges;
  bool has_edges = false;
  bool tail_truncated = false;  // edges or closing tags could not be walked
};

[[noreturn]] void unrepairable(const std::string& what) { throw Error(ErrorCode::Unrepairable, what); }

class Walker {
 public:
  Walker(std::span<const std::uint8_t> img, std::size_t start, const CarveOptions& o, std::vector<XmlRepair>& repairs)
      : img_(img), pos_(start), o_(o), repairs_(repairs) {}

  std::size_t pos() const { return pos_; }

  RawNet run() {
    const Templates& T = templates();
    RawNet net;
    {
      const Alignment a = align(T.net_open, img_, pos_);  // candidate offset is the tag start
      if (!a.within(o_.max_distance)) unrepairable("<net> opening tag beyond repair");
      commit(a);
      net.name = a.slots[0];
      net.version = a.slots[1];
    }
    expect(T.layers_open);
    for (;;) {
      const std::size_t pick = net.layers.empty() ? (expect(T.layer_open), 0) : best_of({&T.layer_open, &T.layers_close});
      if (pick == 1) break;
      net.layers.push_back(read_layer(last_));
    }
    // Everything after </layers> is regenerated on rebuild, so a tail that
    // cannot be walked only shortens the reported extent.
    const std::size_t layers_end = pos_;
    const std::size_t repairs_before = repairs_.size();
    try {
      std::size_t pick = best_of({&T.edges_open, &T.cli_open, &T.net_close});
      if (pick == 0) {
        net.has_edges = true;
        while (best_of({&T.edge, &T.edges_close}) == 0) net.edges.push_back(last_.slots);
        pick = 1 + best_of({&T.cli_open, &T.net_close});
      }
      if (pick == 1) {
        skip_opaque_block(T.cli_close);
        expect(T.net_close);
      }
    } catch (const Error& e) {
      if (e.code() != ErrorCode::Unrepairable) throw;
      pos_ = layers_end;
      repairs_.resize(repairs_before);
      net.has_edges = false;
      net.edges.clear();
      net.tail_truncated = true;
    }
    return net;
  }

 private:
  void skip_blank() {
    while (pos_ < img_.size() && blank(img_[pos_])) ++pos_;
  }

  void commit(const Alignment& a) {
    const Template& t = *a.tmpl;
    for (std::size_t k = 0; k < t.tokens.size(); ++k) {
      const auto& tok = t.tokens[k];
      if (is_slot(tok.kind)) continue;
      const auto [first, last] = a.token_span[k];
      std::string raw;
      if (first < last) raw.assign(img_.begin() + static_cast<std::ptrdiff_t>(first), img_.begin() + static_cast<std::ptrdiff_t>(last));
      if (tok.kind == El::Space) {
        if (a.token_edits[k] == 0) continue;
      } else if (raw == tok.canonical) {
        continue;
      }
      repairs_.push_back({first < last ? first : a.begin, raw, tok.canonical});
    }
    pos_ = a.end;
    last_ = a;
  }

  Alignment peek(const Template& t) {
    skip_blank();
    return align(t, img_, pos_);
  }

  void expect(const Template& t) {
    const Alignment a = peek(t);
    if (!a.within(o_.max_distance))
      unrepairable("expected " + t.label + " at offset " + std::to_string(pos_) + " (token edits " +
                   std::to_string(a.found() ? a.max_edits : -1) + ")");
    commit(a);
  }

  std::size_t best_of(std::initializer_list<const Template*> options) {
    skip_blank();
    std::optional<Alignment> best;
    std::size_t index = 0, i = 0;
    std::string labels;
    for (const Template* t : options) {
      Alignment a = align(*t, img_, pos_);
      labels += (i ? " | " : "") + t->label;
      if (a.within(o_.max_distance) && (!best || a.cost < best->cost)) {
        best = std::move(a);
        index = i;
      }
      ++i;
    }
    if (!best) unrepairable("expected one of " + labels + " at offset " + std::to_string(pos_));
    commit(*best);
    return index;
  }

  // The layer type is decided jointly with the line that must follow it.
  RawLayer read_layer(const Alignment& open) {
    const Templates& T = templates();
    RawLayer layer;
    layer.id = open.slots[0];
    layer.name = open.slots[1];
    layer.type = open.slots[2];

    skip_blank();
    struct Choice {
      LayerKind kind;
      std::size_t lev;
      Alignment next;
      int score;
    };
    std::optional<Choice> best;
    std::string folded = layer.type.raw;
    for (char& c : folded) c = fold(c);
    for (LayerKind k : kAllLayerKinds) {
      std::string name(kind_name(k));
      for (char& c : name) c = fold(c);
      const std::size_t lev = edit_distance(folded, name);
      if (lev > o_.max_distance) continue;
      const auto it = T.data.find(k);
      const Template& next = it != T.data.end() ? it->second : (k == LayerKind::Input ? T.output_open : T.input_open);
      Alignment a = align(next, img_, pos_);
      if (!a.within(o_.max_distance)) continue;
      const int score = 10 * static_cast<int>(lev) + a.cost;
      const auto kn = kind_name(k);
      const bool better = !best || score < best->score ||
                          (score == best->score && (kn.size() > kind_name(best->kind).size() ||
                                                    (kn.size() == kind_name(best->kind).size() && kn < kind_name(best->kind))));
      if (better) best = Choice{k, lev, std::move(a), score};
    }
    if (!best) unrepairable("layer type '" + layer.type.raw + "' at offset " + std::to_string(layer.type.offset) + " cannot be resolved");
    layer.kind = best->kind;
    if (layer.type.raw != kind_name(layer.kind))
      repairs_.push_back({layer.type.offset, layer.type.raw, std::string(kind_name(layer.kind))});

    if (T.data.contains(layer.kind)) {
      commit(best->next);
      layer.data = last_.slots;
    }
    if (layer.kind != LayerKind::Input) {
      if (!T.data.contains(layer.kind)) commit(best->next);
      else expect(T.input_open);
      read_port(layer, layer.in_dims);
      expect(T.input_close);
      expect(T.output_open);
    } else {
      commit(best->next);
    }
    read_port(layer, layer.out_dims);
    expect(T.output_close);
    expect(T.layer_close);
    return layer;
  }

  void read_port(RawLayer& layer, std::vector<SlotText>& dims) {
    const Templates& T = templates();
    expect(T.port_open);
    layer.port_ids.push_back(last_.slots[0]);
    layer.precisions.push_back(last_.slots[1]);
    expect(T.dim);
    dims.push_back(last_.slots[0]);
    while (best_of({&T.dim, &T.port_close}) == 0) dims.push_back(last_.slots[0]);
  }

  // Opaque metadata: advance line by line until the closing tag aligns.
  void skip_opaque_block(const Template& close) {
    for (int line = 0; line < 256; ++line) {
      const Alignment a = peek(close);
      if (a.within(o_.max_distance) && a.cost < kSub * static_cast<int>(o_.max_distance + 1)) {
        commit(a);
        return;
      }
      std::size_t p = pos_ + 1;
      while (p < img_.size() && img_[p] != '>' && img_[p] != '\n') ++p;
      if (p >= img_.size()) break;
      pos_ = p + 1;
    }
    unrepairable("<cli_parameters> block is not closed");
  }

  std::span<const std::uint8_t> img_;
  std::size_t pos_;
  const CarveOptions& o_;
  std::vector<XmlRepair>& repairs_;
  Alignment last_;
};

// ---------------------------------------------------------------------------
// Numeric repair: choose the shape parameters whose canonical rendering is
// closest (in flipped bits) to every numeric slot that depends on them.

struct ParamRef {
  std::size_t layer;
  int field;
};

class ShapeSolver {
 public:
  static constexpr long kInfeasible = 1'000'000;

  explicit ShapeSolver(const RawNet& net) : net_(net) {
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
      const RawLayer& l = net.layers[i];
      const auto& d = l.data;
      auto init = [&](int field, const SlotText* slot) {
        refs_.push_back({i, field});
        values_.push_back(slot ? lenient_count(slot->raw).value_or(1) : 1);
      };
      switch (l.kind) {
        case LayerKind::Input:
          if (l.out_dims.size() < 2) unrepairable("Input layer declares no dimensions");
          for (std::size_t k = 1; k < l.out_dims.size(); ++k) init(static_cast<int>(k - 1), &l.out_dims[k]);
          break;
        case LayerKind::Dense: init(0, &d.at(0)); break;
        case LayerKind::Conv2D:
          init(0, &d.at(0));  // kernel h
          init(1, &d.at(1));  // kernel w
          init(2, &d.at(6));  // output channels
          init(3, &d.at(2));  // stride
          init(4, &d.at(4));  // pad
          break;
        case LayerKind::MaxPool2D:
          init(0, &d.at(0));
          init(1, &d.at(2));
          break;
        case LayerKind::Dropout: {
          std::string text;
          bool point = d.at(0).raw.find('.') != std::string::npos;
          for (char c : d.at(0).raw) {
            const auto b = static_cast<std::uint8_t>(c);
            if (digit(b) || c == '.') {
              text += c;
              continue;
            }
            const char near = nearest_digit(b);
            const auto bits = [b](char t) { return std::popcount(static_cast<unsigned>(b ^ static_cast<std::uint8_t>(t))); };
            if (!point && bits('.') <= bits(near)) {
              text += '.';
              point = true;
            } else {
              text += near;
            }
          }
          float rate = -1.0f;
          const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), rate);
          if (ec != std::errc() || ptr != text.data() + text.size() || !(rate >= 0.0f && rate < 1.0f))
            unrepairable("dropout rate '" + d.at(0).raw + "' cannot be repaired");
          rates_[i] = rate;
          break;
        }
        default: break;
      }
    }
    // Candidate values: everything the text states, each one-bit digit
    // variant of it (a value may be written only once and be the damaged
    // copy), and the small integers that kernels, strides and pads use.
    std::set<std::size_t> seen;
    for (std::size_t k = 0; k <= 16; ++k) seen.insert(k);
    auto add = [&](const SlotText& s) {
      const auto v = lenient_count(s.raw);
      if (!v || *v > 1u << 20) return;
      seen.insert(*v);
      const std::string text = std::to_string(*v);
      for (std::size_t i = 0; i < text.size(); ++i)
        for (int bit = 0; bit < 8; ++bit) {
          std::string variant = text;
          variant[i] = static_cast<char>(variant[i] ^ (1 << bit));
          if (!digit(static_cast<std::uint8_t>(variant[i])) || (i == 0 && variant[i] == '0' && text.size() > 1)) continue;
          std::size_t x = 0;
          std::from_chars(variant.data(), variant.data() + variant.size(), x);
          seen.insert(x);
        }
    };
    for (const auto& l : net.layers) {
      if (l.kind != LayerKind::Dropout)
        for (const auto& s : l.data) add(s);
      for (const auto& s : l.in_dims) add(s);
      for (const auto& s : l.out_dims) add(s);
    }
    candidates_.assign(seen.begin(), seen.end());
  }

  IRModel solve() {
    long best = cost(values_);
    // Steepest descent: apply the single best change each round so one
    // corrupted field is fixed before neighbours bend around it.
    for (int round = 0; round < 64 && best > 0; ++round) {
      long round_best = best;
      std::size_t best_p = 0, best_c = 0;
      for (std::size_t p = 0; p < values_.size(); ++p) {
        for (std::size_t c : candidates_) {
          if (c == values_[p]) continue;
          auto trial = values_;
          trial[p] = c;
          const long v = cost(trial);
          if (v < round_best) {
            round_best = v;
            best_p = p;
            best_c = c;
          }
        }
      }
      if (round_best >= best) break;
      best = round_best;
      values_[best_p] = best_c;
    }
    if (best >= kInfeasible) unrepairable("no consistent layer shapes match the carved dimensions");
    best_cost_ = best;
    return *build(values_);
  }

  // Consistent single-field variants of the solution costing at most `slack`
  // more flipped bits, cheapest first. A flipped digit can make the wrong
  // side of a disagreement look as cheap as the right one; the weight blob
  // then has to break the tie.
  std::vector<IRModel> near_solutions(long slack, std::size_t limit) const {
    // Text that renders exactly has no damaged numeric slot to second-guess.
    if (best_cost_ == 0) return {};
    const IRModel primary = *build(values_);
    std::vector<std::pair<long, IRModel>> found;
    for (std::size_t p = 0; p < values_.size(); ++p) {
      for (std::size_t c : candidates_) {
        if (c == values_[p]) continue;
        auto trial = values_;
        trial[p] = c;
        const long v = cost(trial);
        if (v >= kInfeasible || v > best_cost_ + slack) continue;
        auto m = build(trial);
        if (!m || *m == primary) continue;
        if (std::none_of(found.begin(), found.end(), [&](const auto& f) { return f.second == *m; }))
          found.emplace_back(v, std::move(*m));
      }
    }
    std::stable_sort(found.begin(), found.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    std::vector<IRModel> out;
    for (auto& f : found) {
      if (out.size() == limit) break;
      out.push_back(std::move(f.second));
    }
    return out;
  }

  // Canonical text for every numeric slot of layer i, paired with the slot.
  static std::vector<std::pair<const SlotText*, std::string>> rendered(const RawLayer& l, const LayerSpec& spec,
                                                                        const LayerShapes& shapes) {
    std::vector<std::pair<const SlotText*, std::string>> out;
    if (l.kind != LayerKind::Dropout && !l.data.empty()) {
      std::vector<std::string> parts;
      for (const auto& v : data_values(spec, shapes.input)) {
        std::size_t s = 0;
        for (;;) {
          const auto c = v.find(',', s);
          parts.push_back(v.substr(s, c - s));
          if (c == std::string::npos) break;
          s = c + 1;
        }
      }
      for (std::size_t k = 0; k < std::min(parts.size(), l.data.size()); ++k) out.emplace_back(&l.data[k], parts[k]);
    }
    auto dims = [&](const std::vector<SlotText>& raw, const Shape& shape) {
      for (std::size_t k = 0; k < std::min(raw.size(), shape.size() + 1); ++k)
        out.emplace_back(&raw[k], k == 0 ? std::string("1") : std::to_string(shape[k - 1]));
    };
    if (l.kind != LayerKind::Input) dims(l.in_dims, shapes.input);
    dims(l.out_dims, shapes.output);
    return out;
  }

 private:
  std::optional<IRModel> build(const std::vector<std::size_t>& v, std::size_t limit = SIZE_MAX) const {
    IRModel m;
    m.name = "carved";
    Shape input_shape;
    std::vector<std::vector<std::size_t>> per_layer(net_.layers.size());
    for (std::size_t p = 0; p < refs_.size(); ++p) {
      auto& f = per_layer[refs_[p].layer];
      if (f.size() <= static_cast<std::size_t>(refs_[p].field)) f.resize(static_cast<std::size_t>(refs_[p].field) + 1);
      f[static_cast<std::size_t>(refs_[p].field)] = v[p];
    }
    for (std::size_t i = 0; i < std::min(limit, net_.layers.size()); ++i) {
      const auto& f = per_layer[i];
      LayerSpec s;
      s.id = static_cast<int>(i);
      s.name = "l";
      s.kind = net_.layers[i].kind;
      switch (s.kind) {
        case LayerKind::Input: s.params = InputParams{Shape(f.begin(), f.end())}; break;
        case LayerKind::Dense: s.params = DenseParams{f[0]}; break;
        case LayerKind::Conv2D: s.params = Conv2DParams{f[0], f[1], f[2], f[3], f[4]}; break;
        case LayerKind::MaxPool2D: s.params = MaxPool2DParams{f[0], f[1]}; break;
        case LayerKind::Dropout: s.params = DropoutParams{rates_.at(i)}; break;
        default: s.params = NoParams{}; break;
      }
      m.layers.push_back(std::move(s));
    }
    m.edges = chain_edges(m.layers);
    try {
      m.validate();
    } catch (const Error&) {
      return std::nullopt;
    }
    return m;
  }

  // Infeasible assignments are ranked by how many leading layers still
  // propagate shapes, so descent can walk out of a corrupted start instead
  // of settling in the first consistent basin it meets.
  long cost(const std::vector<std::size_t>& v) const {
    std::size_t usable = net_.layers.size();
    auto m = build(v);
    while (!m && --usable > 0) m = build(v, usable);
    if (!m) return kInf;
    const auto shapes = m->infer_shapes();
    long total = static_cast<long>(net_.layers.size() - usable) * kInfeasible;
    for (std::size_t i = 0; i < usable; ++i) {
      const RawLayer& l = net_.layers[i];
      const Shape& in = shapes[i].input;
      const Shape& out = shapes[i].output;
      if (l.kind != LayerKind::Input && l.in_dims.size() != in.size() + 1) total += 1000;
      if (l.out_dims.size() != out.size() + 1) total += 1000;
      for (const auto& [slot, text] : rendered(l, m->layers[i], shapes[i])) total += render_cost(text, slot->raw);
    }
    return total;
  }

  const RawNet& net_;
  std::vector<ParamRef> refs_;
  std::vector<std::size_t> values_;
  std::vector<std::size_t> candidates_;
  std::map<std::size_t, float> rates_;
  long best_cost_ = 0;
};

void check_slot(const SlotText& slot, const std::string& canonical, const CarveOptions& o,
                std::vector<XmlRepair>& repairs, std::string_view what) {
  if (slot.raw == canonical) return;
  if (char_edits(canonical, slot.raw) > o.max_distance)
    unrepairable(std::string(what) + " '" + slot.raw + "' at offset " + std::to_string(slot.offset) +
                 " is too far from '" + canonical + "'");
  repairs.push_back({slot.offset, slot.raw, canonical});
}

// Checks every carved slot against the canonical rendering of `model` and
// logs the repairs; throws Unrepairable when a slot is beyond the budget.
IRModel finish(const RawNet& net, IRModel model, const CarveOptions& o, std::vector<XmlRepair>& repairs) {
  const auto shapes = model.infer_shapes();

  check_slot(net.version, std::to_string(kIrVersion), o, repairs, "version");
  model.name = printable_name(net.name.raw, "recovered");
  if (model.name != net.name.raw) repairs.push_back({net.name.offset, net.name.raw, model.name});

  const auto precisions = TokenDictionary::precisions();
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const RawLayer& l = net.layers[i];
    LayerSpec& spec = model.layers[i];
    check_slot(l.id, std::to_string(i), o, repairs, "layer id");
    spec.name = printable_name(l.name.raw, std::string(kind_name(l.kind)) + "_" + std::to_string(i));
    if (spec.name != l.name.raw) repairs.push_back({l.name.offset, l.name.raw, spec.name});
    for (std::size_t p = 0; p < l.port_ids.size(); ++p) {
      const bool output = p + 1 == l.port_ids.size();
      check_slot(l.port_ids[p], std::to_string(output ? output_port_id(l.kind) : kInputPortId), o, repairs, "port id");
      std::string fixed;
      try {
        fixed = repair_token(l.precisions[p].raw, precisions, o.max_distance);
      } catch (const Error&) {
        unrepairable("precision '" + l.precisions[p].raw + "' at offset " + std::to_string(l.precisions[p].offset));
      }
      if (fixed != l.precisions[p].raw) repairs.push_back({l.precisions[p].offset, l.precisions[p].raw, fixed});
    }
    for (const auto& [slot, text] : ShapeSolver::rendered(l, spec, shapes[i])) check_slot(*slot, text, o, repairs, "dimension");
    if (l.kind == LayerKind::Dropout) {
      const std::string text = format_float(std::get<DropoutParams>(spec.params).rate);
      if (text != l.data[0].raw) repairs.push_back({l.data[0].offset, l.data[0].raw, text});
    }
  }

  model.edges = chain_edges(model.layers);
  // Edges are regenerated from the chain; a block whose count is off was
  // damaged beyond use and carries no evidence worth failing over.
  if (net.has_edges && net.edges.size() == model.edges.size()) {
    for (std::size_t k = 0; k < net.edges.size(); ++k) {
      const Edge& e = model.edges[k];
      const int want[4] = {e.from_layer, e.from_port, e.to_layer, e.to_port};
      for (int f = 0; f < 4; ++f) check_slot(net.edges[k][static_cast<std::size_t>(f)], std::to_string(want[f]), o, repairs, "edge field");
    }
  }
  model.validate();
  return model;
}

constexpr std::string_view kNetPrefix = "<net name=\"";
constexpr long kAlternativeSlackBits = 2;
constexpr std::size_t kMaxAlternatives = 8;

std::vector<std::size_t> net_candidates(std::span<const std::uint8_t> img, std::size_t max_mismatch) {
  std::vector<std::pair<std::size_t, std::size_t>> found;  // (distance, offset)
  const std::size_t n = kNetPrefix.size();
  for (std::size_t i = 0; i + n <= img.size(); ++i) {
    std::size_t d = 0;
    for (std::size_t k = 0; k < n && d <= max_mismatch; ++k)
      if (fold(static_cast<char>(img[i + k])) != kNetPrefix[k]) ++d;
    if (d <= max_mismatch) found.emplace_back(d, i);
  }
  std::sort(found.begin(), found.end());
  std::vector<std::size_t> out;
  for (const auto& f : found) out.push_back(f.second);
  return out;
}

}  // namespace

ArchitectureCarve carve_architecture(std::span<const std::uint8_t> image, const CarveOptions& options) {
  const auto candidates = net_candidates(image, 3);
  if (candidates.empty()) throw Error(ErrorCode::NotFound, "no <net> start tag found in the image");
  std::string last_error;
  for (std::size_t c = 0; c < std::min(candidates.size(), options.max_candidates); ++c) {
    ArchitectureCarve out;
    try {
      Walker walker(image, candidates[c], options, out.report.xml_repairs);
      const RawNet net = walker.run();
      if (net.layers.empty()) unrepairable("no layers carved");
      ShapeSolver solver(net);
      const std::vector<XmlRepair> walked = out.report.xml_repairs;
      out.model = finish(net, solver.solve(), options, out.report.xml_repairs);
      // The balanced, canonical rendering must parse back to the same model.
      if (!(parse_xml(serialize_xml(out.model)) == out.model)) unrepairable("canonical rendering does not round-trip");
      for (IRModel& m : solver.near_solutions(kAlternativeSlackBits, kMaxAlternatives)) {
        ArchitectureAlternative alt{{}, walked};
        try {
          alt.model = finish(net, std::move(m), options, alt.repairs);
        } catch (const Error&) {
          continue;
        }
        std::sort(alt.repairs.begin(), alt.repairs.end(),
                  [](const XmlRepair& a, const XmlRepair& b) { return a.offset < b.offset; });
        out.alternatives.push_back(std::move(alt));
      }
      out.report.xml_found = true;
      out.report.xml_offset = candidates[c];
      out.report.xml_length = walker.pos() - candidates[c];
      std::sort(out.report.xml_repairs.begin(), out.report.xml_repairs.end(),
                [](const XmlRepair& a, const XmlRepair& b) { return a.offset < b.offset; });
      return out;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::Unrepairable && e.code() != ErrorCode::SchemaViolation) throw;
      last_error = e.what();
    }
  }
  throw Error(ErrorCode::Unrepairable, last_error);
}

}  // namespace coldcarve

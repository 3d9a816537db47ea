#include <gtest/gtest.h>

#include <regex>

#include "stark/svg.hpp"

using namespace stark;

namespace {

std::size_t count(const std::string &text, const std::string &needle) {
  std::size_t n = 0;
  for (auto pos = text.find(needle); pos != std::string::npos; pos = text.find(needle, pos + 1))
    ++n;
  return n;
}

// Every element is either self-closing or closed, in nesting order.
bool balanced(const std::string &doc) {
  std::vector<std::string> stack;
  const std::regex tag(R"(<(/?)([a-z]+)[^>]*?(/?)>)");
  for (auto it = std::sregex_iterator(doc.begin(), doc.end(), tag); it != std::sregex_iterator();
       ++it) {
    const auto &m = *it;
    if (m[3] == "/")
      continue;
    if (m[1] == "/") {
      if (stack.empty() || stack.back() != m[2])
        return false;
      stack.pop_back();
    } else {
      stack.push_back(m[2]);
    }
  }
  return stack.empty();
}

} // namespace

TEST(Svg, TwoPointSeries) {
  svg::Plot p;
  p.x_label = "h/J";
  p.y_label = "F_Q";
  p.series = {{"L=10", {0.1, 1.0}, {2.0, 3.0}}};
  const auto doc = svg::render(p);
  EXPECT_EQ(doc.rfind("<svg", 0), 0u);
  EXPECT_TRUE(balanced(doc));
  EXPECT_EQ(count(doc, "<polyline"), 1u);
  const std::regex points(R"re(points="([^"]*)")re");
  std::smatch m;
  ASSERT_TRUE(std::regex_search(doc, m, points));
  EXPECT_EQ(count(m[1].str(), ","), 2u);
  EXPECT_NE(doc.find("h/J"), std::string::npos);
  EXPECT_NE(doc.find("L=10"), std::string::npos);
}

TEST(Svg, LogAxesSkipNonPositiveAndAreDeterministic) {
  svg::Plot p;
  p.log_x = p.log_y = true;
  p.title = "a < b & c";
  for (int L : {10, 20, 40}) {
    svg::Series s{"L=" + std::to_string(L), {}, {}};
    for (int i = -6; i <= 1; ++i) {
      s.x.push_back(std::pow(10.0, i));
      s.y.push_back(i == -6 ? 0.0 : L * std::pow(10.0, -i));
    }
    p.series.push_back(s);
  }
  const auto doc = svg::render(p);
  EXPECT_TRUE(balanced(doc));
  EXPECT_EQ(count(doc, "<polyline"), 3u);
  EXPECT_NE(doc.find("a &lt; b &amp; c"), std::string::npos);
  EXPECT_NE(doc.find(">1e-3<"), std::string::npos);
  EXPECT_EQ(doc, svg::render(p));
}

TEST(Svg, Errors) {
  svg::Plot p;
  EXPECT_THROW(svg::render(p), InvalidArgument);
  p.series = {{"bad", {1.0, 2.0}, {1.0}}};
  EXPECT_THROW(svg::render(p), InvalidArgument);
  p.log_y = true;
  p.series = {{"neg", {1.0, 2.0}, {-1.0, 0.0}}};
  EXPECT_THROW(svg::render(p), InvalidArgument);
}

TEST(Svg, SinglePointAndMarkers) {
  svg::Plot p;
  p.series = {{"one", {3.0}, {3.0}, true}};
  const auto doc = svg::render(p);
  EXPECT_TRUE(balanced(doc));
  EXPECT_EQ(count(doc, "<circle"), 1u);
}

"""Prompt templates for the format-conversion model (Chinese, verbatim)."""

INSTRUCTION_LINES = (
    '假设你是一个小学数学老师，下面给你一道可能存在语言不规范的题目和对应的答案，请将题目和答案转换成规范格式。',
    '注意答案只需要保留具体解答步骤，且不要改变原答案的解题思路。',
    '如果题目非中文数学题，请指出“这不是一道中文数学题。”。如果存在严重的语法错误导致理解困难，请输出“存在语法错误。”。',
)

INPUT_QUESTION_MARKER = "[题目]"
INPUT_ANSWER_MARKER = "[答案]"
OUTPUT_QUESTION_MARKER = "[问题]"
OUTPUT_ANSWER_MARKER = "[答案]"

SYNTAX_ERROR = "存在语法错误。"
NOT_CHINESE_MATH = "这不是一道中文数学题。"

DEMO_HEADER = '样例'
DEMO_INPUT = '# 输入：'
DEMO_OUTPUT = '# 输出：'
DEMO_QUESTION = '为民商店有一批大米，卖出总数的\n\n\n\n\n\n\n\n5\n\n\n\n8后，又运进540千克，这时商店里的大米数量与原来大米数量的比是6：7，为民商店原有大米多少千克？'
DEMO_ANSWER = '试题分析：卖出总数的\n\n\n\n\n\n\n\n5\n\n\n \n8后，又运来540千克，这时商店里的大米数量与原来大米数量的比是6：7，则即此时大米的重量比原来少1-\n\n\n\n\n\n\n\n6\n\n\n\n7=\n\n\n\n\n\n\n \n1\n\n\n\n7，则这540千克是原来的\n\n\n\n\n\n\n\n5\n\n\n\n8-\n\n\n\n\n\n \n\n1\n\n\n\n7=\n\n\n\n\n\n\n\n27\n\n\n\n56，所以原来有540÷\n\n\n\n\n\n\n\n27\n\n\n\n56 =1120千克．\n试题解析：540÷[5\n8-（1-6\n7）]=540÷[5\n8-1\n7]=540÷27\n56=1120（千克）；答：为民商店原有大米1120千克．'
DEMO_CLEAN_QUESTION = '为民商店有一批大米，卖出总数的$\\frac{5}{8}$后，又运进540千克，这时商店里的大米数量与原来大米数量的比是6：7，为民商店原有大米多少千克？'
DEMO_CLEAN_ANSWER = '解：540÷[$\\frac{5}{8}$-（1-$\\frac{6}{7}$）]\n=540÷[$\\frac{5}{8}$-$\\frac{1}{7}$]\n=540÷$\\frac{27}{56}$\n=1120（千克）；\n答：为民商店原有大米1120千克．'
ONE_SHOT_FOLLOWUP = '请根据以上样例，输出下面这道题目的转换结果：'

TEMPLATE_VERSION = "v1"

"""Prompt scaffold for the analyst narrative, with four fill-in slots.

Trailing whitespace inside the template is significant (markdown hard
breaks); editors must not strip it. The golden-file test pins every byte.
"""

TEMPLATE_VERSION = "analyst-prompt/v1"

PROMPT_TEMPLATE = "You are a financial crime analyst specializing in cryptocurrency fraud. \nA graph-based anomaly detection model has flagged the following wallet as suspicious.\n\nYour task is to analyze both:\n1. The top features that *influenced the model's decision* (from GraphLIME), and\n2. The actual transaction statistics of the wallet.\n\n**Note:** The feature importance scores do NOT reflect actual values - they only indicate how strongly each feature contributed to the anomaly detection.\n\n---\n**Example 1**  \n**Feature Importances (from GraphLIME):**\n- btc_sent_total: 9.812e-01  \n- degree: 3.442e-02  \n- btc_received_total: 0.000e+00  \n\n**Actual Node Data:**\n- btc_sent_total: 0.0  \n- btc_received_total: 45.1  \n- degree: 24  \n\n**Interpretation**:  \nEven though the model heavily weighted `btc_sent_total`, the actual value is 0 - indicating the node received a lot of funds but hasn’t sent anything. This may suggest hoarding behavior, commonly seen in Ponzi schemes.\n\n---\n**Example 2**  \n**Feature Importances (from GraphLIME):**\n- transacted_w_address_mean: 7.623e-01  \n- degree: 1.124e-01  \n- btc_sent_total: 4.132e-03  \n\n**Actual Node Data:**\n- btc_sent_total: 90.55  \n- btc_received_total: 21.38  \n- total_txs: 27  \n- transacted_w_address_mean: 1.0  \n\n**Interpretation**:  \nThe model flagged the wallet based on consistent interactions with unique addresses (`transacted_w_address_mean`), but the node also exhibits significant sending behavior. This could suggest transaction structuring or layering in a money laundering pattern.\n\n---\nNow analyze this real case:\n\n**Node ID**: {node_id}\n\n**Features that most influenced the anomaly model (importance scores only):**\n{formatted_weights}\n\n**Actual Node Values:**\n{formatted_data}\n\n---\nYour tasks:\n1. Explain the suspicious behavior based on these two views.\n2. If appropriate, classify it using known crypto fraud types: {fraud_types}\n3. If the behavior appears normal, say so explicitly."

PLACEHOLDERS = ("{node_id}", "{formatted_weights}", "{formatted_data}", "{fraud_types}")
